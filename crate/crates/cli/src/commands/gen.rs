use std::collections::BTreeMap;

use iclscope::synth::{synth_dataset, SynthDumpConfig, SynthItem};
use iclscope::taskgen::{
    builtin_graph, gen_graph_suite, gen_persona_suite, gen_reading_suite, gen_regression_suite,
    write_suite, Condition, Domain, PersonaTemplate, SuiteEntry, TaskKind,
};
use iclscope::tensorstore::write_dump;
use serde_json::json;

use super::Context;
use crate::config::Config;
use crate::error::{CliError, Result};

const ALL_TASKS: [TaskKind; 4] = [
    TaskKind::Regression,
    TaskKind::Reading,
    TaskKind::Graph,
    TaskKind::Persona,
];

fn parse_list<T: std::str::FromStr<Err = String>>(items: Vec<String>) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| s.parse().map_err(CliError::Config))
        .collect()
}

fn icl_variants(cfg: &mut Config, task: &str) -> Result<Vec<bool>> {
    let raw = cfg.list(&format!("gen.{task}.icl"), &["false", "true"])?;
    raw.iter()
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Config(format!("gen.{task}.icl: bad value '{s}'")))
        })
        .collect()
}

fn generate(cfg: &mut Config, kind: TaskKind, seed: u64) -> Result<(Vec<SuiteEntry>, Vec<String>)> {
    let mut warnings = Vec::new();
    let entries = match kind {
        TaskKind::Regression => {
            let n_lines = cfg.parse("gen.regression.n_lines", 16usize)?;
            let per_line = cfg.parse("gen.regression.prompts_per_line", 4usize)?;
            gen_regression_suite(n_lines, per_line, seed)?
                .into_iter()
                .map(SuiteEntry::Regression)
                .collect()
        }
        TaskKind::Reading => {
            let n_names = cfg.parse("gen.reading.n_names", 5usize)?;
            let n_acts = cfg.parse("gen.reading.n_activities", 4usize)?;
            let k = cfg.parse("gen.reading.composite_size", 3usize)?;
            let mut out = Vec::new();
            for icl in icl_variants(cfg, "reading")? {
                out.extend(
                    gen_reading_suite(n_names, n_acts, k, icl, seed)?
                        .into_iter()
                        .map(SuiteEntry::Reading),
                );
            }
            out
        }
        TaskKind::Graph => {
            let graphs = cfg.list("gen.graph.graphs", &["n7line"])?;
            let domains: Vec<Domain> = parse_list(cfg.list("gen.graph.domains", &["ordRooms"])?)?;
            let conds: Vec<Condition> = parse_list(
                cfg.list("gen.graph.conditions", &Condition::ALL.map(Condition::name))?,
            )?;
            let mut out = Vec::new();
            for icl in icl_variants(cfg, "graph")? {
                for g in &graphs {
                    let graph = builtin_graph(g)?;
                    for &domain in &domains {
                        let suite = gen_graph_suite(&graph, domain, &conds, icl, seed)?;
                        warnings.extend(suite.warnings);
                        out.extend(suite.tasks.into_iter().map(SuiteEntry::Graph));
                    }
                }
            }
            out
        }
        TaskKind::Persona => {
            let n = cfg.parse("gen.persona.n_prompts", 20usize)?;
            let templates: Vec<PersonaTemplate> = parse_list(cfg.list(
                "gen.persona.templates",
                &PersonaTemplate::ALL.map(PersonaTemplate::name),
            )?)?;
            let mut out = Vec::new();
            for icl in icl_variants(cfg, "persona")? {
                for &t in &templates {
                    out.extend(
                        gen_persona_suite(n, t, icl, seed)?
                            .into_iter()
                            .map(SuiteEntry::Persona),
                    );
                }
            }
            out
        }
    };
    Ok((entries, warnings))
}

/// Planting defaults per task: label whose value sets the embedding
/// centroid, and role receiving the response rows' attention focus.
fn plant_defaults(kind: TaskKind) -> (&'static str, &'static str) {
    match kind {
        TaskKind::Regression => ("slope", "examples"),
        TaskKind::Reading => ("activity", "s_inf"),
        TaskKind::Graph => ("condition", "question"),
        TaskKind::Persona => ("activity", "context"),
    }
}

fn synth_config(cfg: &mut Config, kind: TaskKind, seed: u64) -> Result<SynthDumpConfig> {
    let d = SynthDumpConfig::default();
    let (label, role) = plant_defaults(kind);
    let layers: Vec<i64> = cfg
        .list("synth.layers", &["0", "1", "2"])?
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Config(format!("synth.layers: bad layer '{s}'")))
        })
        .collect::<Result<_>>()?;
    let attention_layers = match cfg.list("synth.attention_layers", &["last"])?.as_slice() {
        [all] if all == "all" => None,
        [last] if last == "last" => layers.last().map(|l| vec![*l]),
        other => Some(
            other
                .iter()
                .map(|s| {
                    s.parse().map_err(|_| {
                        CliError::Config(format!("synth.attention_layers: bad layer '{s}'"))
                    })
                })
                .collect::<Result<_>>()?,
        ),
    };
    Ok(SynthDumpConfig {
        attention_layers,
        model: cfg.str("synth.model", &d.model)?,
        d_model: cfg.parse("synth.d_model", d.d_model)?,
        n_heads: cfg.parse("synth.n_heads", d.n_heads)?,
        layers,
        label_key: Some(cfg.str(&format!("synth.{}.label_key", kind.name()), label)?),
        signal: cfg.parse("synth.signal", d.signal)?,
        noise: cfg.parse("synth.noise", d.noise)?,
        focus_role: Some(cfg.str(&format!("synth.{}.focus_role", kind.name()), role)?),
        focus_mass: cfg.parse("synth.focus_mass", d.focus_mass)?,
        jitter: cfg.parse("synth.jitter", d.jitter)?,
        seed,
    })
}

pub fn run(ctx: &mut Context) -> Result<()> {
    let task = ctx.cfg.str("task", "all")?;
    let kinds: Vec<TaskKind> = if task == "all" {
        ALL_TASKS.to_vec()
    } else {
        vec![task.parse().map_err(CliError::Config)?]
    };
    let with_dump = ctx.cfg.bool("gen.dump", true)?;
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    let mut dataset = None;
    for kind in kinds {
        let (e, w) = generate(&mut ctx.cfg, kind, ctx.seed)?;
        warnings.extend(w);
        if with_dump {
            let items: Vec<SynthItem> = e
                .iter()
                .map(|entry| {
                    let item = entry.item();
                    SynthItem {
                        id: item.id.clone(),
                        prompt: item.prompt.clone(),
                        response: entry.oracle_response(),
                        segments: item.segments.clone(),
                        labels: item.labels.clone(),
                    }
                })
                .collect();
            let scfg = synth_config(&mut ctx.cfg, kind, ctx.seed)?;
            let part = synth_dataset(&items, &scfg)?;
            match &mut dataset {
                None => dataset = Some(part),
                Some(ds) => {
                    ds.records.extend(part.records);
                    ds.embeddings.extend(part.embeddings);
                    ds.attention.extend(part.attention);
                }
            }
        }
        entries.extend(e);
    }

    let mut suite = Vec::new();
    write_suite(&mut suite, &entries)?;
    ctx.write("suite.jsonl", suite)?;
    let mut oracle = String::new();
    for e in &entries {
        oracle.push_str(
            &json!({"record_id": e.id(), "response_text": e.oracle_response()}).to_string(),
        );
        oracle.push('\n');
    }
    ctx.write("oracle_responses.jsonl", oracle)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        *counts.entry(e.kind().name()).or_default() += 1;
    }
    ctx.write_json(
        "gen_summary.json",
        &json!({"counts": counts, "warnings": warnings}),
    )?;
    if let Some(ds) = dataset {
        write_dump(&ds, ctx.out.join("dump"))?;
    }
    println!("{} prompts written to {}", entries.len(), ctx.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use iclscope::taskgen::BUILTIN_GRAPHS;

    #[test]
    fn graph_names_are_known() {
        for g in BUILTIN_GRAPHS {
            assert!(builtin_graph(g).is_ok());
        }
    }
}
