use iclscope::probes::{monte_carlo_cv, ProbeConfig, ProbeError};
use iclscope::repgeom::{prompt_vectors, Pooling, TokenSelection};
use iclscope::report::{AnalysisReport, ProbeRow};
use ndarray::Array2;

use super::{curves, group_records, Context};
use crate::error::{CliError, Result};

fn probe_config(ctx: &mut Context) -> Result<ProbeConfig> {
    let d = ProbeConfig::default();
    let cfg = &mut ctx.cfg;
    let config = ProbeConfig {
        l2_lambda: cfg.parse("probe.l2_lambda", d.l2_lambda)?,
        learning_rate: cfg.parse("probe.learning_rate", d.learning_rate)?,
        max_iters: cfg.parse("probe.max_iters", d.max_iters)?,
        grad_tol: cfg.parse("probe.grad_tol", d.grad_tol)?,
        test_fraction: cfg.parse("probe.test_fraction", d.test_fraction)?,
        repetitions: cfg.parse("probe.repetitions", d.repetitions)?,
        seed: ctx.seed,
    };
    config.validate()?;
    Ok(config)
}

pub fn run(ctx: &mut Context) -> Result<()> {
    let ds = ctx.load_dump()?;
    let config = probe_config(ctx)?;
    let cfg = &mut ctx.cfg;
    let layers = cfg.layers(&ds.layers())?;
    let pooling: Pooling = cfg
        .str("pooling", "mean")?
        .parse()
        .map_err(CliError::Config)?;
    let selection: TokenSelection = cfg
        .str("probe.selection", "all_prompt_tokens")?
        .parse()
        .map_err(CliError::Config)?;
    let target = cfg.required("probe.target")?;
    let group_by = cfg.list("probe.group_by", &[])?;
    let groups = group_records(&ds, &group_by);

    let mut report = AnalysisReport::new();
    for &layer in &layers {
        for (cond, records) in &groups {
            let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
            let y: Vec<String> = records
                .iter()
                .map(|r| {
                    r.label(&target).map(str::to_string).ok_or_else(|| {
                        CliError::Config(format!("record {} has no label '{target}'", r.id))
                    })
                })
                .collect::<Result<_>>()?;
            let vectors = prompt_vectors(&ds, &ids, layer, &selection, pooling)?;
            let d = vectors.first().map_or(0, |v| v.vector.len());
            let flat: Vec<f64> = vectors
                .iter()
                .flat_map(|v| v.vector.iter().copied())
                .collect();
            let x = Array2::from_shape_vec((vectors.len(), d), flat).expect("rectangular vectors");
            match monte_carlo_cv(x.view(), &y, &config) {
                Ok(p) => {
                    println!(
                        "layer {layer} [{cond}] {target}: mean={:.4} std={:.4} majority={:.4}",
                        p.mean, p.std, p.majority_baseline
                    );
                    report.probes.push(ProbeRow {
                        layer,
                        condition: cond.clone(),
                        target: target.clone(),
                        report: p,
                    });
                }
                Err(e @ (ProbeError::SingleClass | ProbeError::ClassTooSmall { .. })) => {
                    report
                        .notes
                        .push(format!("layer {layer} [{cond}] skipped: {e}"));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    let rows: Vec<(i64, String, f64)> = report
        .probes
        .iter()
        .map(|r| (r.layer, r.condition.clone(), r.report.mean))
        .collect();
    curves(
        &ctx.out,
        "accuracy",
        &format!("probe accuracy ({target})"),
        "accuracy",
        &rows,
    )?;
    ctx.write("probes.csv", report.probes_csv()?)?;
    ctx.write_json("report.json", &report)?;
    Ok(())
}
