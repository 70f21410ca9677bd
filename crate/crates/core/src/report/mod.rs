//! Aggregated analysis output: JSON summaries, CSV tables and SVG figures.

pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attnratio::{GroupComparison, GroupSummary};
use crate::probes::ProbeReport;
use crate::stats::TestResult;

/// Footer note attached to every report.
pub const INDEPENDENCE_NOTE: &str =
    "Fisher-z comparisons use n = number of strictly-upper-triangle pairs; \
     pairs sharing a prompt are not independent, so these p-values are optimistic.";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ReportError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub layer: i64,
    pub condition: String,
    pub hypothesis: String,
    pub method: String,
    pub n_items: usize,
    pub alignment: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mantel: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub layer: i64,
    pub condition: String,
    pub target: String,
    pub report: ProbeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub layer: i64,
    pub roles: String,
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<GroupComparison>,
    pub excluded: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub alignments: Vec<AlignmentRow>,
    pub probes: Vec<ProbeRow>,
    pub ratios: Vec<RatioRow>,
    pub tests: Vec<TestResult>,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    pub fn new() -> Self {
        Self {
            notes: vec![INDEPENDENCE_NOTE.to_string()],
            ..Self::default()
        }
    }

    pub fn merge(&mut self, other: AnalysisReport) {
        self.alignments.extend(other.alignments);
        self.probes.extend(other.probes);
        self.ratios.extend(other.ratios);
        self.tests.extend(other.tests);
        for n in other.notes {
            if !self.notes.contains(&n) {
                self.notes.push(n);
            }
        }
    }

    pub fn alignments_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "layer",
            "condition",
            "hypothesis",
            "method",
            "n_items",
            "alignment",
            "mantel_p",
            "n_perm",
        ])?;
        for r in &self.alignments {
            w.write_record([
                r.layer.to_string(),
                r.condition.clone(),
                r.hypothesis.clone(),
                r.method.clone(),
                r.n_items.to_string(),
                r.alignment.to_string(),
                r.mantel
                    .as_ref()
                    .map_or(String::new(), |m| m.p_value.to_string()),
                r.mantel
                    .as_ref()
                    .and_then(|m| m.n)
                    .map_or(String::new(), |n| n.to_string()),
            ])?;
        }
        into_string(w)
    }

    pub fn probes_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "layer",
            "condition",
            "target",
            "mean",
            "std",
            "majority_baseline",
            "n_classes",
            "n_train",
            "n_test",
        ])?;
        for r in &self.probes {
            let p = &r.report;
            w.write_record([
                r.layer.to_string(),
                r.condition.clone(),
                r.target.clone(),
                p.mean.to_string(),
                p.std.to_string(),
                p.majority_baseline.to_string(),
                p.n_classes.to_string(),
                p.n_train.to_string(),
                p.n_test.to_string(),
            ])?;
        }
        into_string(w)
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| ReportError::Io {
        path: PathBuf::new(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, text)
}

/// File-name-safe version of a free-form key.
pub fn slug(s: &str) -> String {
    let out: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if out.is_empty() {
        "all".into()
    } else {
        out
    }
}
