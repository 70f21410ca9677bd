use std::path::PathBuf;

use iclscope::report::{svg, AnalysisReport};

use super::{curves, Context};
use crate::error::{CliError, Result};

pub fn run(ctx: &mut Context) -> Result<()> {
    let inputs = ctx.cfg.list("inputs", &[])?;
    if inputs.is_empty() {
        return Err(CliError::Config(
            "report needs at least one input directory".into(),
        ));
    }
    let mut merged = AnalysisReport::new();
    for dir in &inputs {
        let path = PathBuf::from(dir).join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        merged.merge(serde_json::from_str(&text)?);
    }

    let mut by_hyp: std::collections::BTreeMap<&str, Vec<(i64, String, f64)>> = Default::default();
    for r in &merged.alignments {
        by_hyp
            .entry(&r.hypothesis)
            .or_default()
            .push((r.layer, r.condition.clone(), r.alignment));
    }
    for (i, (hyp, rows)) in by_hyp.iter().enumerate() {
        curves(
            &ctx.out,
            &format!("alignment_{i}"),
            &format!("alignment: {hyp}"),
            "alignment",
            rows,
        )?;
    }
    let mut by_target: std::collections::BTreeMap<&str, Vec<(i64, String, f64)>> =
        Default::default();
    for r in &merged.probes {
        by_target
            .entry(&r.target)
            .or_default()
            .push((r.layer, r.condition.clone(), r.report.mean));
    }
    for (i, (target, rows)) in by_target.iter().enumerate() {
        curves(
            &ctx.out,
            &format!("accuracy_{i}"),
            &format!("probe accuracy: {target}"),
            "accuracy",
            rows,
        )?;
    }
    for row in &merged.ratios {
        let series: Vec<svg::Series> = vec![svg::Series {
            name: row.roles.clone(),
            points: row
                .groups
                .iter()
                .enumerate()
                .map(|(k, g)| (k as f64, g.mean))
                .collect(),
        }];
        ctx.write(
            &format!("ratio_means_layer{}.svg", row.layer),
            svg::line_chart(
                &format!("mean ratio per group, layer {}", row.layer),
                &row.groups
                    .iter()
                    .map(|g| g.group.as_str())
                    .collect::<Vec<_>>()
                    .join(" | "),
                "mean ratio",
                &series,
            ),
        )?;
    }
    ctx.write("alignments.csv", merged.alignments_csv()?)?;
    ctx.write("probes.csv", merged.probes_csv()?)?;
    ctx.write_json("report.json", &merged)?;
    println!(
        "{} alignment rows, {} probe rows, {} ratio rows",
        merged.alignments.len(),
        merged.probes.len(),
        merged.ratios.len()
    );
    Ok(())
}
