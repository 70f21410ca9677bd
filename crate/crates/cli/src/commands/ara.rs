use iclscope::attnratio::{ara_study, write_samples_csv, Aggregation, RatioRoles, TokenTarget};
use iclscope::report::{svg, AnalysisReport, RatioRow};

use super::Context;
use crate::error::{CliError, Result};

fn target(s: String) -> Result<TokenTarget> {
    s.parse().map_err(CliError::Config)
}

pub fn run(ctx: &mut Context) -> Result<()> {
    let ds = ctx.load_dump()?;
    let cfg = &mut ctx.cfg;
    let last = ds
        .layers()
        .last()
        .map(|l| l.to_string())
        .unwrap_or_default();
    if cfg.opt_str("layers").is_none() {
        cfg.set("layers", serde_json::Value::String(last));
    }
    let layers = cfg.layers(&ds.layers())?;
    let aggregation: Aggregation = cfg
        .str("aggregation", "max")?
        .parse()
        .map_err(CliError::Config)?;
    let roles = RatioRoles {
        a: target(cfg.str("ara.a", "response")?)?,
        s: target(cfg.str("ara.s", "s_inf")?)?,
        t: target(cfg.str("ara.t", "s_dist")?)?,
    };
    let group_by = cfg.list("ara.group_by", &["icl"])?;
    let bins = cfg.parse("ara.bins", 20usize)?;

    let mut report = AnalysisReport::new();
    let mut samples = Vec::new();
    for layer in layers {
        let study = ara_study(&ds, layer, &roles, aggregation, &group_by)?;
        let groups: Vec<(String, Vec<f64>)> = study
            .groups
            .iter()
            .map(|g| (g.group.clone(), study.group_ratios(&g.group)))
            .collect();
        ctx.write(
            &format!("histograms/layer{layer}.svg"),
            svg::histogram(
                &format!("attention ratio, layer {layer}"),
                "ratio",
                &groups,
                bins,
            ),
        )?;
        ctx.write_json(&format!("ara_layer{layer}.json"), &study)?;
        for g in &study.groups {
            println!(
                "layer {layer} [{}] n={} mean={:.6} std={:.6}",
                g.group, g.n, g.mean, g.std
            );
        }
        for c in &study.comparisons {
            if let Some(w) = &c.welch {
                println!(
                    "layer {layer} {} vs {}: t={:.4} p={:.4e}",
                    c.group_a, c.group_b, w.statistic, w.p_value
                );
            }
        }
        report.ratios.push(RatioRow {
            layer,
            roles: format!(
                "A({}, {}, {})",
                roles.a.describe(),
                roles.s.describe(),
                roles.t.describe()
            ),
            groups: study.groups.clone(),
            comparisons: study.comparisons.clone(),
            excluded: study.excluded.len(),
        });
        samples.extend(study.samples);
    }
    let mut buf = Vec::new();
    write_samples_csv(&mut buf, &samples).map_err(iclscope::report::ReportError::from)?;
    ctx.write("ratio_samples.csv", buf)?;
    ctx.write_json("report.json", &report)?;
    Ok(())
}
