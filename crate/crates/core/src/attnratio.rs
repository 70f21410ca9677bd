//! Attention ratio analysis.
//!
//! For a record with aggregated attention `A` over `x = prompt ⌢ response`
//! and token sets `a`, `s`, `t`:
//!
//! ```text
//! ratio = [ (1/|s|) Σ_{i∈a, j∈s} A[i][j] ] / [ (1/|t|) Σ_{i∈a, k∈t} A[i][k] ]
//! ```
//!
//! Token sets come from character intervals: a token belongs to a set when
//! its interval overlaps the target interval.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{self, StatsError, TestResult};
use crate::tensorstore::{AttentionBlock, Dataset, PromptRecord, Span};

#[derive(Debug, Error)]
pub enum AttnRatioError {
    #[error("record '{record_id}' has no segment '{role}'")]
    UnknownRole { record_id: String, role: String },
    #[error("substring '{0}' not found")]
    SubstringNotFound(String),
    #[error("substring '{0}' occurs more than once")]
    AmbiguousSubstring(String),
    #[error("token set '{0}' is empty")]
    EmptySet(String),
    #[error("denominator attention mass is zero")]
    ZeroDenominator,
    #[error("token index {index} out of range for {n} tokens")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("no attention for record '{record_id}' at layer {layer}")]
    NoAttentionAtLayer { record_id: String, layer: i64 },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, AttnRatioError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(format!("unknown aggregation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedAttention {
    pub record_id: String,
    pub layer: i64,
    pub matrix: Array2<f64>,
    pub aggregation: Aggregation,
}

/// Elementwise max or mean over heads.
pub fn aggregate_heads(block: &AttentionBlock, method: Aggregation) -> AggregatedAttention {
    let (h, n, m) = block.tensor.dim();
    let mut matrix = Array2::<f64>::from_elem(
        (n, m),
        match method {
            Aggregation::Max => f64::NEG_INFINITY,
            Aggregation::Mean => 0.0,
        },
    );
    for head in block.tensor.outer_iter() {
        for (acc, v) in matrix.iter_mut().zip(head.iter()) {
            let v = f64::from(*v);
            match method {
                Aggregation::Max => *acc = acc.max(v),
                Aggregation::Mean => *acc += v,
            }
        }
    }
    if method == Aggregation::Mean && h > 0 {
        matrix.mapv_inplace(|v| v / h as f64);
    }
    AggregatedAttention {
        record_id: block.record_id.clone(),
        layer: block.layer,
        matrix,
        aggregation: method,
    }
}

/// What a token set is resolved from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenTarget {
    Role(String),
    Interval(Span),
    Literal(String),
}

impl TokenTarget {
    pub fn describe(&self) -> String {
        match self {
            TokenTarget::Role(r) => r.clone(),
            TokenTarget::Interval(s) => format!("[{},{})", s.start, s.end),
            TokenTarget::Literal(l) => format!("\"{l}\""),
        }
    }
}

impl std::str::FromStr for TokenTarget {
    type Err = String;

    /// A role name, `text:<literal>` or `span:<start>:<end>`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(lit) = s.strip_prefix("text:") {
            return Ok(TokenTarget::Literal(lit.to_string()));
        }
        if let Some(rest) = s.strip_prefix("span:") {
            let (a, b) = rest
                .split_once(':')
                .ok_or_else(|| format!("bad span target '{s}'"))?;
            let start = a.parse().map_err(|_| format!("bad span target '{s}'"))?;
            let end = b.parse().map_err(|_| format!("bad span target '{s}'"))?;
            return Ok(TokenTarget::Interval(Span::new(start, end)));
        }
        if s.is_empty() {
            return Err("empty token target".into());
        }
        Ok(TokenTarget::Role(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenIndexSet {
    pub record_id: String,
    pub source: String,
    pub indices: Vec<usize>,
}

/// Resolves a target to the sorted indices of overlapping tokens.
pub fn token_spans(record: &PromptRecord, target: &TokenTarget) -> Result<TokenIndexSet> {
    let spans = match target {
        TokenTarget::Role(role) => {
            record
                .role_spans(role)
                .ok_or_else(|| AttnRatioError::UnknownRole {
                    record_id: record.id.clone(),
                    role: role.clone(),
                })?
        }
        TokenTarget::Interval(span) => vec![*span],
        TokenTarget::Literal(lit) => {
            let x = record.full_text();
            let mut hits = x.match_indices(lit.as_str());
            let (byte, _) = hits
                .next()
                .ok_or_else(|| AttnRatioError::SubstringNotFound(lit.clone()))?;
            if lit.is_empty() || hits.next().is_some() {
                return Err(AttnRatioError::AmbiguousSubstring(lit.clone()));
            }
            let start = x[..byte].chars().count();
            vec![Span::new(start, start + lit.chars().count())]
        }
    };
    Ok(TokenIndexSet {
        record_id: record.id.clone(),
        source: target.describe(),
        indices: record.tokens_overlapping(&spans),
    })
}

fn mass(a: &AggregatedAttention, rows: &TokenIndexSet, cols: &TokenIndexSet) -> Result<f64> {
    let n = a.matrix.nrows();
    let m = a.matrix.ncols();
    let mut total = 0.0;
    for &i in &rows.indices {
        if i >= n {
            return Err(AttnRatioError::IndexOutOfRange { index: i, n });
        }
        for &j in &cols.indices {
            if j >= m {
                return Err(AttnRatioError::IndexOutOfRange { index: j, n: m });
            }
            total += a.matrix[[i, j]];
        }
    }
    Ok(total)
}

/// Mean attention from `a` to `s` over mean attention from `a` to `t`.
pub fn attention_ratio(
    attn: &AggregatedAttention,
    a: &TokenIndexSet,
    s: &TokenIndexSet,
    t: &TokenIndexSet,
) -> Result<f64> {
    for set in [a, s, t] {
        if set.indices.is_empty() {
            return Err(AttnRatioError::EmptySet(set.source.clone()));
        }
    }
    let num = mass(attn, a, s)? / s.indices.len() as f64;
    let den = mass(attn, a, t)? / t.indices.len() as f64;
    if den <= 0.0 {
        return Err(AttnRatioError::ZeroDenominator);
    }
    Ok(num / den)
}

/// Roles for `A(a, s, t)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatioRoles {
    pub a: TokenTarget,
    pub s: TokenTarget,
    pub t: TokenTarget,
}

impl RatioRoles {
    pub fn new(a: &str, s: &str, t: &str) -> Self {
        Self {
            a: TokenTarget::Role(a.into()),
            s: TokenTarget::Role(s.into()),
            t: TokenTarget::Role(t.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRatioSample {
    pub record_id: String,
    pub layer: i64,
    pub ratio: f64,
    pub group: String,
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub group_a: String,
    pub group_b: String,
    pub welch: Option<TestResult>,
    pub ks: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AraStudy {
    pub layer: i64,
    pub roles: RatioRoles,
    pub aggregation: Aggregation,
    pub samples: Vec<AttentionRatioSample>,
    pub excluded: Vec<Excluded>,
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<GroupComparison>,
}

impl AraStudy {
    pub fn group_ratios(&self, group: &str) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.group == group)
            .map(|s| s.ratio)
            .collect()
    }
}

/// Group key from label values, e.g. `icl=true,correct=false`.
pub fn group_key(record: &PromptRecord, group_by: &[String]) -> String {
    if group_by.is_empty() {
        return "all".into();
    }
    group_by
        .iter()
        .map(|k| format!("{k}={}", record.label(k).unwrap_or("NA")))
        .collect::<Vec<_>>()
        .join(",")
}

fn sample_for(
    record: &PromptRecord,
    block: &AttentionBlock,
    roles: &RatioRoles,
    aggregation: Aggregation,
) -> Result<f64> {
    let a = token_spans(record, &roles.a)?;
    let s = token_spans(record, &roles.s)?;
    let t = token_spans(record, &roles.t)?;
    let agg = aggregate_heads(block, aggregation);
    attention_ratio(&agg, &a, &s, &t)
}

fn summarize(group: &str, xs: &[f64]) -> GroupSummary {
    let n = xs.len();
    let mean = if n > 0 { stats::mean(xs) } else { f64::NAN };
    let std = if n > 1 {
        stats::sample_variance(xs).sqrt()
    } else {
        0.0
    };
    GroupSummary {
        group: group.to_string(),
        n,
        mean,
        std,
    }
}

/// One ratio per record at `layer`, grouped by label values, with Welch and
/// KS tests for every pair of groups.
///
/// Records whose sets are empty or whose denominator is zero are excluded
/// and listed; unknown roles and missing attention are errors.
pub fn ara_study(
    ds: &Dataset,
    layer: i64,
    roles: &RatioRoles,
    aggregation: Aggregation,
    group_by: &[String],
) -> Result<AraStudy> {
    let results: Vec<(String, Result<f64>)> = ds
        .records
        .par_iter()
        .map(|r| {
            let out = match ds.attention(&r.id, layer) {
                None => Err(AttnRatioError::NoAttentionAtLayer {
                    record_id: r.id.clone(),
                    layer,
                }),
                Some(block) => sample_for(r, block, roles, aggregation),
            };
            (r.id.clone(), out)
        })
        .collect();

    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    for (record, (id, res)) in ds.records.iter().zip(results) {
        match res {
            Ok(ratio) if ratio.is_finite() => samples.push(AttentionRatioSample {
                record_id: id,
                layer,
                ratio,
                group: group_key(record, group_by),
                tags: group_by
                    .iter()
                    .map(|k| (k.clone(), record.label(k).unwrap_or("NA").to_string()))
                    .collect(),
            }),
            Ok(ratio) => excluded.push(Excluded {
                record_id: id,
                reason: format!("non-finite ratio {ratio}"),
            }),
            Err(e @ (AttnRatioError::EmptySet(_) | AttnRatioError::ZeroDenominator)) => excluded
                .push(Excluded {
                    record_id: id,
                    reason: e.to_string(),
                }),
            Err(e) => return Err(e),
        }
    }

    let mut by_group: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &samples {
        by_group.entry(s.group.clone()).or_default().push(s.ratio);
    }
    let groups: Vec<GroupSummary> = by_group.iter().map(|(g, xs)| summarize(g, xs)).collect();
    let keys: Vec<&String> = by_group.keys().collect();
    let mut comparisons = Vec::new();
    for i in 0..keys.len() {
        for j in (i + 1)..keys.len() {
            let (a, b) = (&by_group[keys[i]], &by_group[keys[j]]);
            let welch = stats::welch_t_test(a, b);
            let ks = stats::ks_two_sample(a, b);
            let note = welch.as_ref().err().map(|e| e.to_string());
            comparisons.push(GroupComparison {
                group_a: keys[i].clone(),
                group_b: keys[j].clone(),
                welch: welch.ok(),
                ks: ks.ok(),
                note,
            });
        }
    }
    Ok(AraStudy {
        layer,
        roles: roles.clone(),
        aggregation,
        samples,
        excluded,
        groups,
        comparisons,
    })
}

/// Writes samples as CSV: record id, layer, group, ratio, then one column per tag.
pub fn write_samples_csv<W: std::io::Write>(
    out: W,
    samples: &[AttentionRatioSample],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let tag_keys: Vec<String> = samples
        .first()
        .map(|s| s.tags.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = vec![
        "record_id".to_string(),
        "layer".into(),
        "group".into(),
        "ratio".into(),
    ];
    header.extend(tag_keys.iter().cloned());
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![
            s.record_id.clone(),
            s.layer.to_string(),
            s.group.clone(),
            s.ratio.to_string(),
        ];
        row.extend(
            tag_keys
                .iter()
                .map(|k| s.tags.get(k).cloned().unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorstore::Token;
    use ndarray::{array, Array3};

    fn agg(m: Array2<f64>) -> AggregatedAttention {
        AggregatedAttention {
            record_id: "r".into(),
            layer: 0,
            matrix: m,
            aggregation: Aggregation::Max,
        }
    }

    fn set(ix: &[usize]) -> TokenIndexSet {
        TokenIndexSet {
            record_id: "r".into(),
            source: "test".into(),
            indices: ix.to_vec(),
        }
    }

    #[test]
    fn worked_example() {
        let mut m = Array2::<f64>::zeros((4, 4));
        m.row_mut(2).assign(&array![0.6, 0.2, 0.0, 0.2]);
        let r = attention_ratio(&agg(m), &set(&[2]), &set(&[0]), &set(&[1, 3])).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn head_aggregation() {
        let block = AttentionBlock {
            record_id: "r".into(),
            layer: 0,
            tensor: Array3::from_shape_vec((2, 1, 1), vec![0.2, 0.8]).unwrap(),
        };
        assert_eq!(
            aggregate_heads(&block, Aggregation::Max).matrix[[0, 0]],
            0.8f32 as f64
        );
        let mean = aggregate_heads(&block, Aggregation::Mean).matrix[[0, 0]];
        assert!((mean - 0.5).abs() < 1e-7);
    }

    #[test]
    fn overlap_and_literal_targets() {
        let r = PromptRecord {
            id: "r".into(),
            prompt_text: "hello".into(),
            response_text: " abab".into(),
            tokens: vec![
                Token {
                    text: "hello".into(),
                    start: 0,
                    end: 5,
                },
                Token {
                    text: " abab".into(),
                    start: 5,
                    end: 9,
                },
            ],
            prompt_token_count: 1,
            segments: Default::default(),
            labels: Default::default(),
            layer_ids: vec![],
        };
        let t = |s, e| {
            token_spans(&r, &TokenTarget::Interval(Span::new(s, e)))
                .unwrap()
                .indices
        };
        assert_eq!(t(0, 5), vec![0]);
        assert_eq!(t(3, 7), vec![0, 1]);
        assert!(matches!(
            token_spans(&r, &TokenTarget::Literal("ab".into())),
            Err(AttnRatioError::AmbiguousSubstring(_))
        ));
        assert_eq!(
            token_spans(&r, &TokenTarget::Literal("ell".into()))
                .unwrap()
                .indices,
            vec![0]
        );
        assert!(matches!(
            token_spans(&r, &TokenTarget::Role("s_inf".into())),
            Err(AttnRatioError::UnknownRole { .. })
        ));
    }

    #[test]
    fn one_hot_on_s_has_zero_denominator() {
        let m = array![[1.0, 0.0], [1.0, 0.0]];
        assert!(matches!(
            attention_ratio(&agg(m), &set(&[1]), &set(&[0]), &set(&[1])),
            Err(AttnRatioError::ZeroDenominator)
        ));
    }
}
