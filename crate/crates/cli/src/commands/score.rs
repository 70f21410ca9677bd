use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};

use iclscope::taskgen::read_suite;
use serde::{Deserialize, Serialize};

use super::Context;
use crate::error::{CliError, Result};

#[derive(Debug, Deserialize)]
struct Response {
    record_id: String,
    response_text: String,
}

#[derive(Debug, Serialize)]
struct ScoreLine<'a> {
    record_id: &'a str,
    task: &'a str,
    correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_error: Option<f64>,
}

#[derive(Debug, Default, Serialize)]
struct TaskSummary {
    n: usize,
    n_correct: usize,
    success_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_abs_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_abs_error: Option<f64>,
    missing: usize,
}

pub fn run(ctx: &mut Context) -> Result<()> {
    let suite_path = ctx.cfg.path("suite")?;
    let resp_path = ctx.cfg.path("responses")?;
    let task_filter = ctx.cfg.opt_str("task").filter(|t| t != "all");
    let file = File::open(&suite_path).map_err(|e| CliError::io(&suite_path, e))?;
    let suite = read_suite(BufReader::new(file))?;

    let file = File::open(&resp_path).map_err(|e| CliError::io(&resp_path, e))?;
    let mut responses: BTreeMap<String, String> = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&resp_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Response = serde_json::from_str(&line).map_err(|e| {
            CliError::Config(format!("{} line {}: {e}", resp_path.display(), i + 1))
        })?;
        responses.insert(r.record_id, r.response_text);
    }

    let mut lines = String::new();
    let mut summary: BTreeMap<&str, TaskSummary> = BTreeMap::new();
    let mut errors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for entry in &suite {
        let task = entry.kind().name();
        if task_filter.as_deref().is_some_and(|t| t != task) {
            continue;
        }
        let s = summary.entry(task).or_default();
        let Some(text) = responses.get(entry.id()) else {
            s.missing += 1;
            continue;
        };
        let score = entry.score(text);
        s.n += 1;
        s.n_correct += usize::from(score.correct);
        if let Some(e) = score.abs_error {
            errors.entry(task).or_default().push(e);
        }
        lines.push_str(&serde_json::to_string(&ScoreLine {
            record_id: entry.id(),
            task,
            correct: score.correct,
            abs_error: score.abs_error,
        })?);
        lines.push('\n');
    }
    for (task, s) in summary.iter_mut() {
        s.success_rate = if s.n > 0 {
            s.n_correct as f64 / s.n as f64
        } else {
            0.0
        };
        if let Some(es) = errors.get(task) {
            s.mean_abs_error = Some(es.iter().sum::<f64>() / es.len() as f64);
            s.max_abs_error = es.iter().copied().reduce(f64::max);
        }
        println!(
            "{task}: {}/{} correct ({:.4})",
            s.n_correct, s.n, s.success_rate
        );
    }
    ctx.write("scores.jsonl", lines)?;
    ctx.write_json("score_summary.json", &summary)?;
    Ok(())
}
