use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{PersonaPrompt, ReadingPrompt, RegressionPrompt, Result, TaskgenError, TraversalTask};
use crate::tensorstore::Span;

/// Task-independent part of every generated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteItem {
    pub id: String,
    /// Rendered prompt text.
    pub prompt: String,
    pub segments: BTreeMap<String, Vec<Span>>,
    pub labels: BTreeMap<String, String>,
}

impl SuiteItem {
    pub fn new(id: String, prompt: String, segments: BTreeMap<String, Vec<Span>>) -> Self {
        Self {
            id,
            prompt,
            segments,
            labels: BTreeMap::new(),
        }
    }

    pub fn label(mut self, key: &str, value: impl ToString) -> Self {
        self.labels.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    Reading,
    Graph,
    Persona,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Regression => "regression",
            TaskKind::Reading => "reading",
            TaskKind::Graph => "graph",
            TaskKind::Persona => "persona",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "regression" => Ok(TaskKind::Regression),
            "reading" => Ok(TaskKind::Reading),
            "graph" => Ok(TaskKind::Graph),
            "persona" => Ok(TaskKind::Persona),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}

/// One JSON line of a suite file, tagged by `task`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum SuiteEntry {
    Regression(RegressionPrompt),
    Reading(ReadingPrompt),
    Graph(TraversalTask),
    Persona(PersonaPrompt),
}

impl SuiteEntry {
    pub fn item(&self) -> &SuiteItem {
        match self {
            SuiteEntry::Regression(p) => &p.item,
            SuiteEntry::Reading(p) => &p.item,
            SuiteEntry::Graph(p) => &p.item,
            SuiteEntry::Persona(p) => &p.item,
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            SuiteEntry::Regression(_) => TaskKind::Regression,
            SuiteEntry::Reading(_) => TaskKind::Reading,
            SuiteEntry::Graph(_) => TaskKind::Graph,
            SuiteEntry::Persona(_) => TaskKind::Persona,
        }
    }

    pub fn id(&self) -> &str {
        &self.item().id
    }

    /// Response a perfect model would give, as a continuation of the prompt.
    pub fn oracle_response(&self) -> String {
        match self {
            SuiteEntry::Regression(p) => format!("{:.2})", p.y_t),
            SuiteEntry::Reading(p) => format!(" {}.", p.ground_truth_activity),
            SuiteEntry::Graph(t) => format!(" {}", t.oracle_response()),
            SuiteEntry::Persona(p) => format!(" {}.", p.ground_truth_activity),
        }
    }

    /// Scores a response. Regression responses that contain no number are
    /// incorrect with no error value.
    pub fn score(&self, response: &str) -> Score {
        match self {
            SuiteEntry::Regression(p) => match super::parse_numeric_response(response) {
                Ok(y_hat) => {
                    let error = super::score_regression(p.y_t, y_hat);
                    Score {
                        correct: error < 0.005,
                        abs_error: Some(error),
                    }
                }
                Err(_) => Score {
                    correct: false,
                    abs_error: None,
                },
            },
            SuiteEntry::Reading(p) => {
                Score::binary(super::score_reading(response, &p.ground_truth_activity))
            }
            SuiteEntry::Graph(t) => Score::binary(super::score_traversal(response, t)),
            SuiteEntry::Persona(p) => {
                Score::binary(super::score_reading(response, &p.ground_truth_activity))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_error: Option<f64>,
}

impl Score {
    fn binary(correct: bool) -> Self {
        Self {
            correct,
            abs_error: None,
        }
    }
}

pub fn write_suite<W: Write>(mut out: W, entries: &[SuiteEntry]) -> Result<()> {
    for (i, e) in entries.iter().enumerate() {
        let line = serde_json::to_string(e).map_err(|source| TaskgenError::SuiteFormat {
            line: i + 1,
            source,
        })?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_suite<R: BufRead>(input: R) -> Result<Vec<SuiteEntry>> {
    let mut entries = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|source| TaskgenError::SuiteFormat {
            line: i + 1,
            source,
        })?;
        entries.push(entry);
    }
    Ok(entries)
}
