use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{attention_from, embedding_from, load_blob, load_manifest};
use super::{Dataset, PromptRecord};

/// Row sums of attention must lie within this distance of 1.
pub const ROW_SUM_TOLERANCE: f32 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub message: String,
}

impl Finding {
    fn error(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            record_id: None,
            layer: None,
            head: None,
            row: None,
            file: None,
            message: message.into(),
        }
    }

    fn warning(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(message)
        }
    }

    fn record(mut self, id: &str) -> Self {
        self.record_id = Some(id.to_string());
        self
    }

    fn layer(mut self, layer: i64) -> Self {
        self.layer = Some(layer);
        self
    }

    fn file(mut self, file: &str) -> Self {
        self.file = Some(file.to_string());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    fn push(&mut self, f: Finding) {
        self.findings.push(f);
    }
}

fn check_record(r: &PromptRecord, out: &mut ValidationReport) {
    let total = r.total_chars();
    let prompt_len = r.prompt_chars();
    let mut prev_end = 0usize;
    for (i, t) in r.tokens.iter().enumerate() {
        if t.start > t.end || t.end > total {
            out.push(
                Finding::error(format!(
                    "token {i} interval [{}, {}) outside [0, {total})",
                    t.start, t.end
                ))
                .record(&r.id),
            );
        }
        if i > 0 && t.start < prev_end {
            out.push(
                Finding::error(format!(
                    "token {i} starts at {} before previous token end {prev_end}",
                    t.start
                ))
                .record(&r.id),
            );
        }
        prev_end = prev_end.max(t.end);
    }
    if r.prompt_token_count > r.tokens.len() {
        out.push(
            Finding::error(format!(
                "prompt_token_count {} exceeds token count {}",
                r.prompt_token_count,
                r.tokens.len()
            ))
            .record(&r.id),
        );
    } else if let Some((i, t)) = r.tokens[..r.prompt_token_count]
        .iter()
        .enumerate()
        .find(|(_, t)| t.end > prompt_len)
    {
        out.push(
            Finding::error(format!(
                "prompt token {i} ends at {} past prompt length {prompt_len}",
                t.end
            ))
            .record(&r.id),
        );
    }
    for (role, spans) in &r.segments {
        for s in spans {
            if s.start > s.end || s.end > total {
                out.push(
                    Finding::error(format!(
                        "segment '{role}' interval [{}, {}) outside [0, {total})",
                        s.start, s.end
                    ))
                    .record(&r.id),
                );
            }
        }
    }
}

/// Checks every dataset invariant and collects findings without stopping.
pub fn check_dataset(ds: &Dataset) -> ValidationReport {
    let mut out = ValidationReport::default();
    let mut by_id: HashMap<&str, &PromptRecord> = HashMap::new();
    for r in &ds.records {
        if by_id.insert(r.id.as_str(), r).is_some() {
            out.push(Finding::error("duplicate record id").record(&r.id));
        }
        check_record(r, &mut out);
    }

    let mut covered: BTreeSet<(&str, i64)> = BTreeSet::new();
    for ((id, layer), block) in &ds.embeddings {
        let Some(r) = by_id.get(id.as_str()) else {
            out.push(
                Finding::error("dangling index entry: embedding for unknown record")
                    .record(id)
                    .layer(*layer),
            );
            continue;
        };
        covered.insert((id.as_str(), *layer));
        if !r.layer_ids.contains(layer) {
            out.push(
                Finding::error(format!("embedding layer {layer} not in record layer_ids"))
                    .record(id)
                    .layer(*layer),
            );
        }
        let (n, d) = block.matrix.dim();
        let expected = ds.expected_embedding_rows(r);
        if n != expected || d != ds.meta.d_model {
            out.push(
                Finding::error(format!(
                    "embedding shape [{n}, {d}], expected [{expected}, {}]",
                    ds.meta.d_model
                ))
                .record(id)
                .layer(*layer),
            );
        }
        if block.matrix.iter().any(|v| !v.is_finite()) {
            out.push(
                Finding::error("embedding contains non-finite values")
                    .record(id)
                    .layer(*layer),
            );
        }
    }

    for ((id, layer), block) in &ds.attention {
        let Some(r) = by_id.get(id.as_str()) else {
            out.push(
                Finding::error("dangling index entry: attention for unknown record")
                    .record(id)
                    .layer(*layer),
            );
            continue;
        };
        covered.insert((id.as_str(), *layer));
        if !r.layer_ids.contains(layer) {
            out.push(
                Finding::error(format!("attention layer {layer} not in record layer_ids"))
                    .record(id)
                    .layer(*layer),
            );
        }
        let (h, n, m) = block.tensor.dim();
        let total = r.tokens.len();
        if h != ds.meta.n_heads || n != total || m != total {
            out.push(
                Finding::error(format!(
                    "attention shape [{h}, {n}, {m}], expected [{}, {total}, {total}]",
                    ds.meta.n_heads
                ))
                .record(id)
                .layer(*layer),
            );
            continue;
        }
        if block.tensor.iter().any(|v| !v.is_finite()) {
            out.push(
                Finding::error("attention contains non-finite values")
                    .record(id)
                    .layer(*layer),
            );
            continue;
        }
        for (head, slice) in block.tensor.outer_iter().enumerate() {
            for (row, values) in slice.outer_iter().enumerate() {
                let sum: f32 = values.sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    let mut f = Finding::warning(format!("attention row sums to {sum}"))
                        .record(id)
                        .layer(*layer);
                    f.head = Some(head);
                    f.row = Some(row);
                    out.push(f);
                }
            }
        }
    }

    for r in &ds.records {
        for layer in &r.layer_ids {
            if !covered.contains(&(r.id.as_str(), *layer)) {
                out.push(
                    Finding::warning(format!("layer {layer} listed but has no blocks"))
                        .record(&r.id)
                        .layer(*layer),
                );
            }
        }
    }
    out
}

/// Validates a dump directory. Never fails: every problem becomes a finding.
pub fn validate_dump(dir: impl AsRef<Path>) -> ValidationReport {
    let dir = dir.as_ref();
    let mut report = ValidationReport::default();
    let manifest = match load_manifest(dir) {
        Ok(m) => m,
        Err(e) => {
            report.push(Finding::error(e.to_string()).file(super::MANIFEST_FILE));
            return report;
        }
    };
    let mut ds = Dataset::new(manifest.meta.clone());
    ds.records = manifest.records.clone();
    for entry in &manifest.embeddings {
        match load_blob(dir, entry).and_then(|data| embedding_from(entry, data)) {
            Ok(block) => ds.insert_embedding(block),
            Err(e) => report.push(
                Finding::error(e.to_string())
                    .record(&entry.record_id)
                    .layer(entry.layer)
                    .file(&entry.file),
            ),
        }
    }
    for entry in &manifest.attention {
        match load_blob(dir, entry).and_then(|data| attention_from(entry, data)) {
            Ok(block) => ds.insert_attention(block),
            Err(e) => report.push(
                Finding::error(e.to_string())
                    .record(&entry.record_id)
                    .layer(entry.layer)
                    .file(&entry.file),
            ),
        }
    }
    report.findings.extend(check_dataset(&ds).findings);
    report
}
