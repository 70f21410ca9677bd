//! Representational similarity analysis.
//!
//! Token embeddings are pooled into one vector per prompt (or per graph
//! node), standardized per dimension across the analysis set, and compared
//! by cosine similarity. The resulting matrix `M` is correlated with an a
//! priori hypothesis matrix `H` over the strictly-upper triangle.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{self, CorrelationMethod, StatsError, TestResult};
use crate::taskgen::{self, GraphSpec, TaskgenError};
use crate::tensorstore::{Dataset, EmbeddingBlock, PromptRecord, Span};

/// Floor on per-dimension standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RepgeomError {
    #[error("token selection '{selection}' is empty for record '{record_id}'")]
    EmptySelection {
        record_id: String,
        selection: String,
    },
    #[error("record '{record_id}' has no segment '{role}'")]
    UnknownRole { record_id: String, role: String },
    #[error("need at least {needed} vectors, got {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector for '{0}'")]
    ZeroVector(String),
    #[error("record '{record_id}' has no label '{key}'")]
    MissingLabel { record_id: String, key: String },
    #[error("matrices have different record orders")]
    OrderMismatch,
    #[error("hypothesis is constant off the diagonal")]
    DegenerateHypothesis,
    #[error("no embedding for record '{record_id}' at layer {layer}")]
    MissingEmbedding { record_id: String, layer: i64 },
    #[error("unknown record '{0}'")]
    UnknownRecord(String),
    #[error("non-finite value in vector '{0}'")]
    NonFinite(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Taskgen(#[from] TaskgenError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RepgeomError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Max,
    Mean,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::Max => "max",
            Pooling::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "max" => Ok(Pooling::Max),
            "mean" => Ok(Pooling::Mean),
            other => Err(format!("unknown pooling '{other}'")),
        }
    }
}

/// Which token rows feed a prompt vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "role")]
pub enum TokenSelection {
    /// The first `prompt_token_count` tokens.
    #[default]
    AllPromptTokens,
    /// Tokens overlapping any interval of a role.
    Segment(String),
    /// Tokens overlapping only the last interval of a role.
    LastMention(String),
}

impl std::fmt::Display for TokenSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TokenSelection::AllPromptTokens => write!(f, "all_prompt_tokens"),
            TokenSelection::Segment(r) => write!(f, "segment:{r}"),
            TokenSelection::LastMention(r) => write!(f, "last:{r}"),
        }
    }
}

impl std::str::FromStr for TokenSelection {
    type Err = String;

    /// `all_prompt_tokens`, `segment:<role>` or `last:<role>`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all_prompt_tokens" || s == "prompt" {
            return Ok(TokenSelection::AllPromptTokens);
        }
        if let Some(role) = s.strip_prefix("segment:") {
            return Ok(TokenSelection::Segment(role.to_string()));
        }
        if let Some(role) = s.strip_prefix("last:") {
            return Ok(TokenSelection::LastMention(role.to_string()));
        }
        Err(format!("unknown token selection '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptVector {
    pub record_id: String,
    pub layer: i64,
    pub vector: Vec<f64>,
    pub pooling: Pooling,
    pub selection: TokenSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub order: Vec<String>,
    pub values: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisKind {
    LabelEquality,
    Combined,
    SuccessorRepresentation,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisMatrix {
    pub order: Vec<String>,
    pub values: Array2<f64>,
    pub kind: HypothesisKind,
}

/// Token indices selected from `record`, limited to the first `rows` tokens.
pub fn select_tokens(
    record: &PromptRecord,
    selection: &TokenSelection,
    rows: usize,
) -> Result<Vec<usize>> {
    let spans = |role: &str| -> Result<Vec<Span>> {
        record
            .role_spans(role)
            .ok_or_else(|| RepgeomError::UnknownRole {
                record_id: record.id.clone(),
                role: role.to_string(),
            })
    };
    let idx: Vec<usize> = match selection {
        TokenSelection::AllPromptTokens => (0..record.prompt_token_count.min(rows)).collect(),
        TokenSelection::Segment(role) => record.tokens_overlapping(&spans(role)?),
        TokenSelection::LastMention(role) => {
            let all = spans(role)?;
            record.tokens_overlapping(all.last().map(std::slice::from_ref).unwrap_or(&[]))
        }
    };
    let idx: Vec<usize> = idx.into_iter().filter(|&i| i < rows).collect();
    if idx.is_empty() {
        return Err(RepgeomError::EmptySelection {
            record_id: record.id.clone(),
            selection: selection.to_string(),
        });
    }
    Ok(idx)
}

/// Elementwise max or mean over the given rows.
pub fn pool_rows(matrix: ArrayView2<f32>, rows: &[usize], method: Pooling) -> Vec<f64> {
    let d = matrix.ncols();
    match method {
        Pooling::Max => {
            let mut out = vec![f64::NEG_INFINITY; d];
            for &r in rows {
                for (o, v) in out.iter_mut().zip(matrix.row(r)) {
                    *o = o.max(f64::from(*v));
                }
            }
            out
        }
        Pooling::Mean => {
            let mut out = vec![0.0; d];
            for &r in rows {
                for (o, v) in out.iter_mut().zip(matrix.row(r)) {
                    *o += f64::from(*v);
                }
            }
            let n = rows.len() as f64;
            out.iter_mut().for_each(|o| *o /= n);
            out
        }
    }
}

/// Pools one record's embedding block into a prompt vector.
pub fn pool_tokens(
    record: &PromptRecord,
    block: &EmbeddingBlock,
    selection: &TokenSelection,
    method: Pooling,
) -> Result<PromptVector> {
    let rows = select_tokens(record, selection, block.matrix.nrows())?;
    let vector = pool_rows(block.matrix.view(), &rows, method);
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(RepgeomError::NonFinite(record.id.clone()));
    }
    Ok(PromptVector {
        record_id: record.id.clone(),
        layer: block.layer,
        vector,
        pooling: method,
        selection: selection.clone(),
    })
}

/// Prompt vectors for `ids` (in that order) at one layer.
pub fn prompt_vectors(
    ds: &Dataset,
    ids: &[String],
    layer: i64,
    selection: &TokenSelection,
    method: Pooling,
) -> Result<Vec<PromptVector>> {
    ids.iter()
        .map(|id| {
            let record = ds
                .record(id)
                .ok_or_else(|| RepgeomError::UnknownRecord(id.clone()))?;
            let block = ds
                .embedding(id, layer)
                .ok_or_else(|| RepgeomError::MissingEmbedding {
                    record_id: id.clone(),
                    layer,
                })?;
            pool_tokens(record, block, selection, method)
        })
        .collect()
}

/// One vector per graph node, pooled from the last `node:<label>` mention.
/// Vector ids are the node labels.
pub fn node_vectors(
    record: &PromptRecord,
    block: &EmbeddingBlock,
    labels: &[String],
    method: Pooling,
) -> Result<Vec<PromptVector>> {
    labels
        .iter()
        .map(|label| {
            let sel = TokenSelection::LastMention(format!("node:{label}"));
            let mut v = pool_tokens(record, block, &sel, method)?;
            v.record_id = label.clone();
            Ok(v)
        })
        .collect()
}

fn column_stats(sets: &[&[PromptVector]]) -> Result<(Vec<f64>, Vec<f64>)> {
    let all: Vec<&PromptVector> = sets.iter().flat_map(|s| s.iter()).collect();
    if all.len() < 2 {
        return Err(RepgeomError::TooFewVectors {
            needed: 2,
            got: all.len(),
        });
    }
    let d = all[0].vector.len();
    if let Some(v) = all.iter().find(|v| v.vector.len() != d) {
        return Err(RepgeomError::DimensionMismatch {
            expected: d,
            got: v.vector.len(),
        });
    }
    let n = all.len() as f64;
    let mut mean = vec![0.0; d];
    for v in &all {
        for (m, x) in mean.iter_mut().zip(&v.vector) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for v in &all {
        for ((s, x), m) in var.iter_mut().zip(&v.vector).zip(&mean) {
            *s += (x - m).powi(2);
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / n).sqrt().max(STD_FLOOR))
        .collect();
    Ok((mean, std))
}

fn apply(vectors: &[PromptVector], mean: &[f64], std: &[f64]) -> Vec<PromptVector> {
    vectors
        .iter()
        .map(|v| {
            let mut out = v.clone();
            for ((x, m), s) in out.vector.iter_mut().zip(mean).zip(std) {
                *x = (*x - m) / s;
            }
            out
        })
        .collect()
}

/// Per-dimension z-score across the set (population std, floored).
pub fn standardize(vectors: &[PromptVector]) -> Result<Vec<PromptVector>> {
    let (mean, std) = column_stats(&[vectors])?;
    Ok(apply(vectors, &mean, &std))
}

/// Standardizes several sets, either each on its own statistics or all on
/// the statistics of their union.
pub fn standardize_sets(sets: &[Vec<PromptVector>], joint: bool) -> Result<Vec<Vec<PromptVector>>> {
    if joint {
        let refs: Vec<&[PromptVector]> = sets.iter().map(Vec::as_slice).collect();
        let (mean, std) = column_stats(&refs)?;
        Ok(sets.iter().map(|s| apply(s, &mean, &std)).collect())
    } else {
        sets.iter().map(|s| standardize(s)).collect()
    }
}

/// Pairwise cosine similarities with an exact unit diagonal.
pub fn cosine_similarity_matrix(vectors: &[PromptVector]) -> Result<SimilarityMatrix> {
    let m = vectors.len();
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| {
            let n2: f64 = v.vector.iter().map(|x| x * x).sum();
            if n2 == 0.0 || !n2.is_finite() {
                Err(RepgeomError::ZeroVector(v.record_id.clone()))
            } else {
                Ok(n2)
            }
        })
        .collect::<Result<_>>()?;
    if let Some(first) = vectors.first() {
        let d = first.vector.len();
        if let Some(v) = vectors.iter().find(|v| v.vector.len() != d) {
            return Err(RepgeomError::DimensionMismatch {
                expected: d,
                got: v.vector.len(),
            });
        }
    }
    let mut values = Array2::<f64>::eye(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let dot: f64 = vectors[i]
                .vector
                .iter()
                .zip(&vectors[j].vector)
                .map(|(a, b)| a * b)
                .sum();
            let c = (dot / (norms[i] * norms[j]).sqrt()).clamp(-1.0, 1.0);
            values[[i, j]] = c;
            values[[j, i]] = c;
        }
    }
    Ok(SimilarityMatrix {
        order: vectors.iter().map(|v| v.record_id.clone()).collect(),
        values,
    })
}

/// Binary equality matrix over arbitrary per-item labels.
pub fn hypothesis_from_values(order: Vec<String>, labels: &[String]) -> HypothesisMatrix {
    let m = labels.len();
    let values =
        Array2::from_shape_fn((m, m), |(i, j)| f64::from(u8::from(labels[i] == labels[j])));
    HypothesisMatrix {
        order,
        values,
        kind: HypothesisKind::LabelEquality,
    }
}

/// `H[i][j] = 1` when records `i` and `j` share the label value, else 0.
pub fn hypothesis_from_labels<'a>(
    records: impl IntoIterator<Item = &'a PromptRecord>,
    label_key: &str,
) -> Result<HypothesisMatrix> {
    let mut order = Vec::new();
    let mut labels = Vec::new();
    for r in records {
        let v = r
            .label(label_key)
            .ok_or_else(|| RepgeomError::MissingLabel {
                record_id: r.id.clone(),
                key: label_key.to_string(),
            })?;
        order.push(r.id.clone());
        labels.push(v.to_string());
    }
    Ok(hypothesis_from_values(order, &labels))
}

/// Elementwise average of two hypotheses over the same order.
pub fn hypothesis_combined(
    h1: &HypothesisMatrix,
    h2: &HypothesisMatrix,
) -> Result<HypothesisMatrix> {
    if h1.order != h2.order {
        return Err(RepgeomError::OrderMismatch);
    }
    Ok(HypothesisMatrix {
        order: h1.order.clone(),
        values: (&h1.values + &h2.values) / 2.0,
        kind: HypothesisKind::Combined,
    })
}

/// Successor-representation hypothesis for a graph: `(SR + SRᵀ)/2`, min-max
/// scaled to `[0, 1]`. Rows follow node ids; `order` names them.
pub fn hypothesis_successor(
    g: &GraphSpec,
    gamma: f64,
    order: Vec<String>,
) -> Result<HypothesisMatrix> {
    let sr = taskgen::successor_representation(&taskgen::transition_matrix(g), gamma)?;
    let sym = (&sr + &sr.t()) / 2.0;
    let lo = sym.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sym.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi > lo {
        sym.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array2::zeros(sym.raw_dim())
    };
    Ok(HypothesisMatrix {
        order,
        values,
        kind: HypothesisKind::SuccessorRepresentation,
    })
}

fn check_pair(m: &SimilarityMatrix, h: &HypothesisMatrix) -> Result<()> {
    if m.order != h.order || m.values.dim() != h.values.dim() {
        return Err(RepgeomError::OrderMismatch);
    }
    let upper = stats::upper_triangle(&h.values);
    if upper.windows(2).all(|w| w[0] == w[1]) {
        return Err(RepgeomError::DegenerateHypothesis);
    }
    Ok(())
}

/// Correlation of the strictly-upper triangles of `M` and `H`.
pub fn hypothesis_alignment(
    m: &SimilarityMatrix,
    h: &HypothesisMatrix,
    method: CorrelationMethod,
) -> Result<f64> {
    if m.order.len() < 3 {
        return Err(RepgeomError::TooFewVectors {
            needed: 3,
            got: m.order.len(),
        });
    }
    check_pair(m, h)?;
    Ok(stats::correlation(
        &stats::upper_triangle(&m.values),
        &stats::upper_triangle(&h.values),
        method,
    )?)
}

/// Mantel permutation test of `M` against `H`.
pub fn mantel_test(
    m: &SimilarityMatrix,
    h: &HypothesisMatrix,
    n_perm: usize,
    method: CorrelationMethod,
    seed: u64,
) -> Result<TestResult> {
    check_pair(m, h)?;
    Ok(stats::mantel(&m.values, &h.values, n_perm, method, seed)?)
}

/// Number of strictly-upper-triangle entries, the sample size used when
/// comparing alignments through Fisher's z.
pub fn pair_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// Writes a square matrix as CSV with a header row of ids.
pub fn write_matrix_csv<W: Write>(out: W, order: &[String], values: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(order.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in order.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv<R: std::io::Read>(input: R) -> Result<(Vec<String>, Array2<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let order: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let m = order.len();
    let mut values = Array2::zeros((m, m));
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for j in 0..m {
            values[[i, j]] = rec
                .get(j + 1)
                .and_then(|s| s.parse().ok())
                .ok_or(RepgeomError::OrderMismatch)?;
        }
    }
    Ok((order, values))
}
