pub mod ara;
pub mod gen;
pub mod probe;
pub mod report;
pub mod rsa;
pub mod score;
pub mod validate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use iclscope::report::{svg, write_file, write_json};
use iclscope::tensorstore::{check_dataset, read_dump, Dataset, PromptRecord};
use serde_json::json;

use crate::config::Config;
use crate::error::{CliError, Result};

pub struct Context {
    pub cfg: Config,
    pub out: PathBuf,
    pub seed: u64,
}

impl Context {
    pub fn new(mut cfg: Config) -> Result<Self> {
        let out = PathBuf::from(cfg.str("out", "out")?);
        let seed = cfg.parse("seed", 0u64)?;
        Ok(Self { cfg, out, seed })
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.out.join(name);
        let dir = path.parent().unwrap_or(&self.out).to_path_buf();
        let file = path
            .file_name()
            .and_then(|f| f.to_str())
            .unwrap_or(name)
            .to_string();
        Ok(write_file(&dir, &file, contents)?)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.out.join(name);
        let dir = path.parent().unwrap_or(&self.out).to_path_buf();
        let file = path
            .file_name()
            .and_then(|f| f.to_str())
            .unwrap_or(name)
            .to_string();
        Ok(write_json(&dir, &file, value)?)
    }

    /// Reads the configured dump and refuses one with validation errors.
    pub fn load_dump(&mut self) -> Result<Dataset> {
        let path = self.cfg.path("dump")?;
        let ds = read_dump(&path)?;
        let n_errors = check_dataset(&ds).errors().count();
        if n_errors > 0 {
            return Err(CliError::InvalidDump(n_errors));
        }
        Ok(ds)
    }

    /// Writes `run.json` with the resolved configuration.
    pub fn finish(&self, command: &str, error: Option<&CliError>) -> Result<()> {
        let status = match error {
            None => json!({"ok": true}),
            Some(e) => json!({"ok": false, "error": e.kind(), "message": e.to_string()}),
        };
        let run = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config": self.cfg.to_json(),
            "status": status,
        });
        self.write_json("run.json", &run)?;
        Ok(())
    }
}

/// Record ids grouped by the `k=v,...` key of the chosen labels, in dump order.
pub fn group_records<'a>(
    ds: &'a Dataset,
    group_by: &[String],
) -> BTreeMap<String, Vec<&'a PromptRecord>> {
    let mut groups: BTreeMap<String, Vec<&PromptRecord>> = BTreeMap::new();
    for r in &ds.records {
        groups
            .entry(iclscope::attnratio::group_key(r, group_by))
            .or_default()
            .push(r);
    }
    groups
}

/// Numeric value of a single-key group like `icl_count=3`.
pub fn numeric_condition(group: &str) -> Option<f64> {
    let (_, v) = group.split_once('=')?;
    if v.contains(',') || group.matches('=').count() != 1 {
        return None;
    }
    v.parse().ok()
}

/// Curves of `value` against layer, one series per condition, plus curves
/// against the condition value when every condition is numeric.
pub fn curves(
    out: &Path,
    stem: &str,
    title: &str,
    y_label: &str,
    rows: &[(i64, String, f64)],
) -> Result<()> {
    let mut by_cond: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    let mut by_layer: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    let numeric = !rows.is_empty() && rows.iter().all(|r| numeric_condition(&r.1).is_some());
    for (layer, cond, v) in rows {
        by_cond.entry(cond).or_default().push((*layer as f64, *v));
        if numeric {
            by_layer
                .entry(*layer)
                .or_default()
                .push((numeric_condition(cond).unwrap(), *v));
        }
    }
    let series: Vec<svg::Series> = by_cond
        .into_iter()
        .map(|(name, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            svg::Series {
                name: name.to_string(),
                points,
            }
        })
        .collect();
    write_file(
        out,
        &format!("{stem}_by_layer.svg"),
        svg::line_chart(title, "layer", y_label, &series),
    )?;
    if numeric {
        let x_label = rows[0]
            .1
            .split_once('=')
            .map_or("condition", |(k, _)| k)
            .to_string();
        let series: Vec<svg::Series> = by_layer
            .into_iter()
            .map(|(layer, mut points)| {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                svg::Series {
                    name: format!("layer {layer}"),
                    points,
                }
            })
            .collect();
        write_file(
            out,
            &format!("{stem}_by_condition.svg"),
            svg::line_chart(title, &x_label, y_label, &series),
        )?;
    }
    Ok(())
}
