use iclscope::repgeom::{
    cosine_similarity_matrix, hypothesis_alignment, hypothesis_combined, hypothesis_from_labels,
    hypothesis_successor, mantel_test, node_vectors, prompt_vectors, standardize, standardize_sets,
    write_matrix_csv, HypothesisMatrix, Pooling, PromptVector, TokenSelection,
};
use iclscope::report::{slug, svg, AlignmentRow, AnalysisReport};
use iclscope::stats::{self, CorrelationMethod};
use iclscope::taskgen::builtin_graph;
use iclscope::tensorstore::{Dataset, PromptRecord};

use super::{curves, group_records, Context};
use crate::error::{CliError, Result};

enum Hypothesis {
    Label(String),
    Combined(String, String),
    Successor(f64),
}

impl Hypothesis {
    fn parse(s: &str) -> Result<Self> {
        if let Some(k) = s.strip_prefix("label:") {
            return Ok(Hypothesis::Label(k.to_string()));
        }
        if let Some(ks) = s.strip_prefix("combined:") {
            let (a, b) = ks
                .split_once(',')
                .or_else(|| ks.split_once('+'))
                .ok_or_else(|| {
                    CliError::Config(format!("combined hypothesis needs two keys: '{s}'"))
                })?;
            return Ok(Hypothesis::Combined(a.to_string(), b.to_string()));
        }
        if s == "sr" {
            return Ok(Hypothesis::Successor(0.95));
        }
        if let Some(g) = s.strip_prefix("sr:") {
            return g
                .parse()
                .map(Hypothesis::Successor)
                .map_err(|_| CliError::Config(format!("bad gamma in '{s}'")));
        }
        Err(CliError::Config(format!(
            "unknown hypothesis '{s}' (expected label:<key>, combined:<k1>,<k2> or sr[:gamma])"
        )))
    }

    fn matrix(&self, records: &[&PromptRecord]) -> Result<HypothesisMatrix> {
        Ok(match self {
            Hypothesis::Label(k) => hypothesis_from_labels(records.iter().copied(), k)?,
            Hypothesis::Combined(a, b) => hypothesis_combined(
                &hypothesis_from_labels(records.iter().copied(), a)?,
                &hypothesis_from_labels(records.iter().copied(), b)?,
            )?,
            Hypothesis::Successor(_) => unreachable!("node-level hypothesis"),
        })
    }
}

struct Settings {
    layers: Vec<i64>,
    pooling: Pooling,
    selection: TokenSelection,
    method: CorrelationMethod,
    group_by: Vec<String>,
    joint: bool,
    n_perm: usize,
    hypothesis_name: String,
    hypothesis: Hypothesis,
}

fn settings(ctx: &mut Context, ds: &Dataset) -> Result<Settings> {
    let cfg = &mut ctx.cfg;
    let hypothesis_name = cfg.required("hypothesis")?;
    Ok(Settings {
        layers: cfg.layers(&ds.layers())?,
        pooling: cfg
            .str("pooling", "mean")?
            .parse()
            .map_err(CliError::Config)?,
        selection: cfg
            .str("rsa.selection", "all_prompt_tokens")?
            .parse()
            .map_err(CliError::Config)?,
        method: cfg
            .str("rsa.method", "pearson")?
            .parse()
            .map_err(CliError::Config)?,
        group_by: cfg.list("rsa.group_by", &[])?,
        joint: cfg.bool("rsa.joint_standardize", false)?,
        n_perm: cfg.parse("n_perm", 9999usize)?,
        hypothesis: Hypothesis::parse(&hypothesis_name)?,
        hypothesis_name,
    })
}

pub fn run(ctx: &mut Context) -> Result<()> {
    let ds = ctx.load_dump()?;
    let s = settings(ctx, &ds)?;
    let groups = group_records(&ds, &s.group_by);
    let mut report = AnalysisReport::new();
    report
        .notes
        .push(format!("alignment method: {}", s.method.name()));
    if let Hypothesis::Successor(gamma) = s.hypothesis {
        node_level(ctx, &ds, &s, gamma, &groups, &mut report)?;
    } else {
        prompt_level(ctx, &ds, &s, &groups, &mut report)?;
    }
    let rows: Vec<(i64, String, f64)> = report
        .alignments
        .iter()
        .map(|r| (r.layer, r.condition.clone(), r.alignment))
        .collect();
    curves(
        &ctx.out,
        "alignment",
        "hypothesis alignment",
        "alignment",
        &rows,
    )?;
    ctx.write("alignments.csv", report.alignments_csv()?)?;
    ctx.write_json("report.json", &report)?;
    for r in &report.alignments {
        println!(
            "layer {} [{}] {} = {:.6}",
            r.layer, r.condition, r.hypothesis, r.alignment
        );
    }
    Ok(())
}

fn prompt_level(
    ctx: &Context,
    ds: &Dataset,
    s: &Settings,
    groups: &std::collections::BTreeMap<String, Vec<&PromptRecord>>,
    report: &mut AnalysisReport,
) -> Result<()> {
    for &layer in &s.layers {
        let mut sets: Vec<Vec<PromptVector>> = Vec::new();
        for records in groups.values() {
            let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
            sets.push(prompt_vectors(ds, &ids, layer, &s.selection, s.pooling)?);
        }
        let sets = standardize_sets(&sets, s.joint)?;
        for ((cond, records), vectors) in groups.iter().zip(&sets) {
            let m = cosine_similarity_matrix(vectors)?;
            let h = s.hypothesis.matrix(records)?;
            let alignment = hypothesis_alignment(&m, &h, s.method)?;
            let mantel = mantel_test(&m, &h, s.n_perm, s.method, ctx.seed)?;
            let stem = format!("matrices/layer{layer}_{}", slug(cond));
            let mut buf = Vec::new();
            write_matrix_csv(&mut buf, &m.order, &m.values)?;
            ctx.write(&format!("{stem}_M.csv"), buf)?;
            let mut buf = Vec::new();
            write_matrix_csv(&mut buf, &h.order, &h.values)?;
            ctx.write(&format!("{stem}_H.csv"), buf)?;
            ctx.write(
                &format!("heatmaps/layer{layer}_{}.svg", slug(cond)),
                svg::heatmap(&format!("M layer {layer} [{cond}]"), &m.order, &m.values),
            )?;
            report.alignments.push(AlignmentRow {
                layer,
                condition: cond.clone(),
                hypothesis: s.hypothesis_name.clone(),
                method: s.method.name().to_string(),
                n_items: records.len(),
                alignment,
                mantel: Some(mantel),
            });
        }
    }
    Ok(())
}

/// Per-record node similarity against the successor representation of the
/// record's graph; each row reports the mean over the group's records.
fn node_level(
    ctx: &Context,
    ds: &Dataset,
    s: &Settings,
    gamma: f64,
    groups: &std::collections::BTreeMap<String, Vec<&PromptRecord>>,
    report: &mut AnalysisReport,
) -> Result<()> {
    let mut csv = String::from("record_id,layer,condition,alignment\n");
    for &layer in &s.layers {
        for (cond, records) in groups {
            let mut values = Vec::new();
            for r in records {
                let graph_id = r.label("graph").ok_or_else(|| {
                    CliError::Config(format!("record {} has no 'graph' label", r.id))
                })?;
                let labels: Vec<String> = r
                    .label("node_labels")
                    .ok_or_else(|| {
                        CliError::Config(format!("record {} has no 'node_labels' label", r.id))
                    })?
                    .split('|')
                    .map(str::to_string)
                    .collect();
                let graph = builtin_graph(graph_id)?;
                let block = ds.embedding(&r.id, layer).ok_or_else(|| {
                    iclscope::repgeom::RepgeomError::MissingEmbedding {
                        record_id: r.id.clone(),
                        layer,
                    }
                })?;
                let vectors = standardize(&node_vectors(r, block, &labels, s.pooling)?)?;
                let m = cosine_similarity_matrix(&vectors)?;
                let h = hypothesis_successor(&graph, gamma, labels)?;
                let a = hypothesis_alignment(&m, &h, s.method)?;
                csv.push_str(&format!("{},{layer},\"{cond}\",{a}\n", r.id));
                values.push(a);
            }
            if values.is_empty() {
                continue;
            }
            report.alignments.push(AlignmentRow {
                layer,
                condition: cond.clone(),
                hypothesis: s.hypothesis_name.clone(),
                method: s.method.name().to_string(),
                n_items: values.len(),
                alignment: stats::mean(&values),
                mantel: None,
            });
        }
    }
    ctx.write("node_alignments.csv", csv)?;
    Ok(())
}
