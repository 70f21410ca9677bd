//! Synthetic activations with planted structure.
//!
//! Embeddings carry one centroid direction per class label; attention puts a
//! chosen share of each response row's mass on a focus range. Every draw is
//! keyed off [`SplitMix64`], so outputs depend only on the inputs.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{fnv1a, SplitMix64};
use crate::tensorstore::{
    AttentionBlock, Dataset, DumpMeta, EmbeddingBlock, EmbeddingScope, PromptRecord, Span, Token,
};

const TAG_DIRECTION: u64 = 11;
const TAG_SAMPLE: u64 = 12;
const TAG_JITTER: u64 = 13;
const TAG_TOKEN: u64 = 14;

pub const DEFAULT_JITTER: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SynthError::InvalidSpec(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEmbeddingSpec {
    /// One entry per sample.
    pub labels: Vec<String>,
    pub d: usize,
    /// Norm of every class centroid.
    pub signal: f64,
    /// Isotropic noise std.
    pub noise: f64,
    pub seed: u64,
}

impl PlantedEmbeddingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return invalid("d must be at least 2");
        }
        if !(self.signal >= 0.0 && self.noise >= 0.0) {
            return invalid("signal and noise must be nonnegative");
        }
        Ok(())
    }
}

/// Unit centroid direction per distinct label.
///
/// Each label seeds a gaussian vector from its FNV-1a hash. Labels are then
/// orthonormalized in sorted order by Gram-Schmidt when there are at most `d`
/// of them; otherwise each vector is only normalized.
pub fn class_directions(labels: &[String], d: usize, seed: u64) -> BTreeMap<String, Vec<f64>> {
    let mut distinct: Vec<&String> = labels.iter().collect();
    distinct.sort();
    distinct.dedup();
    let orthogonalize = distinct.len() <= d;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut out = BTreeMap::new();
    for label in distinct {
        let mut rng = SplitMix64::keyed(seed, &[TAG_DIRECTION, fnv1a(label)]);
        let mut v: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
        if orthogonalize {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v.clone());
        out.insert(label.clone(), v);
    }
    out
}

/// `m × d` samples, row `i` = `signal · dir(labels[i]) + noise · N(0, I)`.
pub fn synth_embeddings(spec: &PlantedEmbeddingSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let dirs = class_directions(&spec.labels, spec.d, spec.seed);
    let mut out = Array2::<f64>::zeros((spec.labels.len(), spec.d));
    for (i, (label, mut row)) in spec.labels.iter().zip(out.rows_mut()).enumerate() {
        let mut rng = SplitMix64::keyed(spec.seed, &[TAG_SAMPLE, i as u64]);
        for (x, c) in row.iter_mut().zip(&dirs[label]) {
            *x = spec.signal * c + spec.noise * rng.gaussian();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAttentionSpec {
    pub n_total: usize,
    /// Token index range of the attending rows.
    pub response: Span,
    /// Token index range receiving `focus_mass`.
    pub focus: Span,
    pub focus_mass: f64,
    pub heads: usize,
    /// Relative per-entry head jitter; each entry is scaled by
    /// `1 + jitter·(2u − 1)` before rows are renormalized.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    pub seed: u64,
    #[serde(default)]
    pub record_id: String,
    #[serde(default)]
    pub layer: i64,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

impl PlantedAttentionSpec {
    pub fn validate(&self) -> Result<()> {
        let Self {
            n_total,
            response,
            focus,
            ..
        } = self;
        if response.is_empty() || focus.is_empty() {
            return invalid("response and focus ranges must be nonempty");
        }
        if response.end > *n_total || focus.end > *n_total {
            return invalid("ranges must lie within [0, n_total)");
        }
        if response.overlaps(focus) {
            return invalid("response and focus ranges must be disjoint");
        }
        if !(self.focus_mass > 0.0 && self.focus_mass < 1.0) {
            return invalid("focus_mass must lie in (0, 1)");
        }
        if self.heads == 0 {
            return invalid("heads must be at least 1");
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return invalid("jitter must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Rows of one planted matrix before jitter.
fn planted_rows(n: usize, response: &[usize], focus: &[usize], focus_mass: f64) -> Array2<f64> {
    let mut base = Array2::from_elem((n, n), 1.0 / n as f64);
    let in_focus: Vec<bool> = (0..n).map(|j| focus.contains(&j)).collect();
    let rest = n - focus.len();
    for &i in response {
        for j in 0..n {
            base[[i, j]] = if in_focus[j] {
                focus_mass / focus.len() as f64
            } else if rest > 0 {
                (1.0 - focus_mass) / rest as f64
            } else {
                0.0
            };
        }
    }
    base
}

fn jittered_heads(
    base: &Array2<f64>,
    heads: usize,
    jitter: f64,
    rng: &mut SplitMix64,
) -> Array3<f32> {
    let n = base.nrows();
    let mut out = Array3::<f32>::zeros((heads, n, n));
    for h in 0..heads {
        for i in 0..n {
            let row: Vec<f64> = base
                .row(i)
                .iter()
                .map(|v| {
                    let u = rng.uniform();
                    if jitter > 0.0 {
                        v * (1.0 + jitter * (2.0 * u - 1.0))
                    } else {
                        *v
                    }
                })
                .collect();
            let total: f64 = row.iter().sum();
            for (j, v) in row.iter().enumerate() {
                out[[h, i, j]] = (v / total) as f32;
            }
        }
    }
    out
}

pub fn synth_attention(spec: &PlantedAttentionSpec) -> Result<AttentionBlock> {
    spec.validate()?;
    let response: Vec<usize> = (spec.response.start..spec.response.end).collect();
    let focus: Vec<usize> = (spec.focus.start..spec.focus.end).collect();
    let base = planted_rows(spec.n_total, &response, &focus, spec.focus_mass);
    let mut rng = SplitMix64::keyed(spec.seed, &[TAG_JITTER]);
    Ok(AttentionBlock {
        record_id: spec.record_id.clone(),
        layer: spec.layer,
        tensor: jittered_heads(&base, spec.heads, spec.jitter, &mut rng),
    })
}

static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+|[^\w\s]").unwrap());

/// Word/punctuation tokens with character offsets shifted by `offset`.
pub fn tokenize(text: &str, offset: usize) -> Vec<Token> {
    let mut chars_before = 0usize;
    let mut last_byte = 0usize;
    TOKEN_RE
        .find_iter(text)
        .map(|m| {
            chars_before += text[last_byte..m.start()].chars().count();
            let len = m.as_str().chars().count();
            let start = offset + chars_before;
            chars_before += len;
            last_byte = m.end();
            Token {
                text: m.as_str().to_string(),
                start,
                end: start + len,
            }
        })
        .collect()
}

/// Input to [`synth_dataset`]: one prompt with its annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthItem {
    pub id: String,
    pub prompt: String,
    pub response: String,
    pub segments: BTreeMap<String, Vec<Span>>,
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDumpConfig {
    pub model: String,
    pub d_model: usize,
    pub n_heads: usize,
    pub layers: Vec<i64>,
    /// Layers that get attention blocks; every layer when `None`.
    pub attention_layers: Option<Vec<i64>>,
    /// Label whose value selects the planted centroid.
    pub label_key: Option<String>,
    /// Centroid norm at the last layer; layer `k` of `L` gets
    /// `signal · (k + 1) / L`.
    pub signal: f64,
    pub noise: f64,
    /// Role receiving `focus_mass` from response rows.
    pub focus_role: Option<String>,
    pub focus_mass: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SynthDumpConfig {
    fn default() -> Self {
        Self {
            model: "synthetic".into(),
            d_model: 16,
            n_heads: 2,
            layers: vec![0, 1, 2],
            attention_layers: None,
            label_key: None,
            signal: 5.0,
            noise: 1.0,
            focus_role: None,
            focus_mass: 0.8,
            jitter: DEFAULT_JITTER,
            seed: 0,
        }
    }
}

fn synth_record(item: &SynthItem, layers: &[i64]) -> PromptRecord {
    let prompt_chars = item.prompt.chars().count();
    let mut tokens = tokenize(&item.prompt, 0);
    let prompt_token_count = tokens.len();
    tokens.extend(tokenize(&item.response, prompt_chars));
    PromptRecord {
        id: item.id.clone(),
        prompt_text: item.prompt.clone(),
        response_text: item.response.clone(),
        tokens,
        prompt_token_count,
        segments: item.segments.clone(),
        labels: item.labels.clone(),
        layer_ids: layers.to_vec(),
    }
}

fn record_blocks(
    record: &PromptRecord,
    cfg: &SynthDumpConfig,
    dirs: &BTreeMap<String, Vec<f64>>,
) -> (Vec<EmbeddingBlock>, Vec<AttentionBlock>) {
    let n = record.tokens.len();
    let key = fnv1a(&record.id);
    let centroid = cfg
        .label_key
        .as_deref()
        .and_then(|k| record.label(k))
        .and_then(|v| dirs.get(v));
    let response: Vec<usize> = (record.prompt_token_count..n).collect();
    let focus: Vec<usize> = cfg
        .focus_role
        .as_deref()
        .and_then(|r| record.role_spans(r))
        .map(|s| record.tokens_overlapping(&s))
        .unwrap_or_default()
        .into_iter()
        .filter(|i| *i < record.prompt_token_count)
        .collect();
    let base = if focus.is_empty() || response.is_empty() {
        planted_rows(n, &[], &[], 0.0)
    } else {
        planted_rows(n, &response, &focus, cfg.focus_mass)
    };
    let n_layers = cfg.layers.len() as f64;
    let mut embs = Vec::new();
    let mut attn = Vec::new();
    for (k, &layer) in cfg.layers.iter().enumerate() {
        let scale = cfg.signal * (k as f64 + 1.0) / n_layers;
        let mut rng = SplitMix64::keyed(cfg.seed, &[TAG_TOKEN, key, layer as u64]);
        let matrix = Array2::from_shape_fn((n, cfg.d_model), |(_, j)| {
            let c = centroid.map_or(0.0, |c| c[j]);
            (scale * c + cfg.noise * rng.gaussian()) as f32
        });
        embs.push(EmbeddingBlock {
            record_id: record.id.clone(),
            layer,
            matrix,
        });
        if cfg
            .attention_layers
            .as_ref()
            .is_some_and(|ls| !ls.contains(&layer))
        {
            continue;
        }
        let mut rng = SplitMix64::keyed(cfg.seed, &[TAG_JITTER, key, layer as u64]);
        attn.push(AttentionBlock {
            record_id: record.id.clone(),
            layer,
            tensor: jittered_heads(&base, cfg.n_heads, cfg.jitter, &mut rng),
        });
    }
    (embs, attn)
}

/// Builds a full dataset with planted embeddings and attention for every
/// item and layer.
pub fn synth_dataset(items: &[SynthItem], cfg: &SynthDumpConfig) -> Result<Dataset> {
    if cfg.d_model < 2 || cfg.n_heads == 0 || cfg.layers.is_empty() {
        return invalid("d_model ≥ 2, n_heads ≥ 1 and at least one layer required");
    }
    if !(0.0..1.0).contains(&cfg.jitter) || !(cfg.focus_mass > 0.0 && cfg.focus_mass < 1.0) {
        return invalid("jitter must lie in [0, 1) and focus_mass in (0, 1)");
    }
    let labels: Vec<String> = cfg
        .label_key
        .as_deref()
        .map(|k| {
            items
                .iter()
                .filter_map(|i| i.labels.get(k).cloned())
                .collect()
        })
        .unwrap_or_default();
    let dirs = class_directions(&labels, cfg.d_model, cfg.seed);
    let mut ds = Dataset::new(DumpMeta {
        model: cfg.model.clone(),
        d_model: cfg.d_model,
        n_heads: cfg.n_heads,
        seed: cfg.seed,
        embedding_scope: EmbeddingScope::Full,
    });
    ds.records = items.iter().map(|i| synth_record(i, &cfg.layers)).collect();
    let blocks: Vec<_> = ds
        .records
        .par_iter()
        .map(|r| record_blocks(r, cfg, &dirs))
        .collect();
    for (embs, attn) in blocks {
        embs.into_iter().for_each(|b| ds.insert_embedding(b));
        attn.into_iter().for_each(|b| ds.insert_attention(b));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize, k: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{}", i % k)).collect()
    }

    #[test]
    fn directions_are_orthonormal() {
        let dirs = class_directions(&labels(10, 5), 8, 3);
        let v: Vec<&Vec<f64>> = dirs.values().collect();
        for i in 0..v.len() {
            for j in 0..v.len() {
                let dot: f64 = v[i].iter().zip(v[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_rows_repeat() {
        let spec = PlantedEmbeddingSpec {
            labels: labels(6, 2),
            d: 4,
            signal: 2.0,
            noise: 0.0,
            seed: 1,
        };
        let x = synth_embeddings(&spec).unwrap();
        assert_eq!(x.row(0), x.row(2));
        assert_ne!(x.row(0), x.row(1));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let spec = PlantedAttentionSpec {
            n_total: 10,
            response: Span::new(8, 10),
            focus: Span::new(0, 2),
            focus_mass: 0.8,
            heads: 3,
            jitter: DEFAULT_JITTER,
            seed: 4,
            record_id: "r".into(),
            layer: 0,
        };
        let block = synth_attention(&spec).unwrap();
        for head in block.tensor.outer_iter() {
            for row in head.outer_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let spec = PlantedAttentionSpec {
            n_total: 4,
            response: Span::new(1, 3),
            focus: Span::new(0, 2),
            focus_mass: 0.5,
            heads: 1,
            jitter: 0.0,
            seed: 0,
            record_id: String::new(),
            layer: 0,
        };
        assert!(synth_attention(&spec).is_err());
    }

    #[test]
    fn tokenizer_offsets() {
        let toks = tokenize("Hé, you.", 3);
        let got: Vec<(&str, usize, usize)> = toks
            .iter()
            .map(|t| (t.text.as_str(), t.start, t.end))
            .collect();
        assert_eq!(
            got,
            vec![("Hé", 3, 5), (",", 5, 6), ("you", 7, 10), (".", 10, 11)]
        );
    }
}
