//! Activation-dump dataset model and its on-disk container.
//!
//! A dump directory holds `manifest.json` plus one headerless little-endian
//! `f32` blob per block, named `<record_id>.<emb|attn>.<layer>.bin`. See
//! `docs/dump-format.md` for the schema.
//!
//! All character offsets are counted in Unicode scalar values over
//! `x = prompt_text + response_text`, half-open `[start, end)`.

mod io;
mod validate;

use std::collections::BTreeMap;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_dump, write_dump, BLOB_EXT, MANIFEST_FILE};
pub use validate::{check_dataset, validate_dump, Finding, Severity, ValidationReport};

/// Half-open character interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// True when the two intervals share at least one character.
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Self { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

/// Slices `text` by character offsets. Out-of-range bounds are clamped.
pub fn char_slice(text: &str, span: Span) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(Some(text.len()));
    let start = indices.by_ref().nth(span.start).unwrap_or(text.len());
    let end = if span.end <= span.start {
        start
    } else {
        indices.nth(span.end - span.start - 1).unwrap_or(text.len())
    };
    &text[start..end]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

/// One prompt with its model response, tokenization and annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub prompt_text: String,
    pub response_text: String,
    pub tokens: Vec<Token>,
    pub prompt_token_count: usize,
    #[serde(default)]
    pub segments: BTreeMap<String, Vec<Span>>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub layer_ids: Vec<i64>,
}

impl PromptRecord {
    /// `x = prompt ⌢ response`.
    pub fn full_text(&self) -> String {
        let mut x = String::with_capacity(self.prompt_text.len() + self.response_text.len());
        x.push_str(&self.prompt_text);
        x.push_str(&self.response_text);
        x
    }

    pub fn prompt_chars(&self) -> usize {
        self.prompt_text.chars().count()
    }

    pub fn total_chars(&self) -> usize {
        self.prompt_chars() + self.response_text.chars().count()
    }

    /// Intervals of a role. `prompt` and `response` are always available and
    /// resolve to the two halves of `x` unless the record overrides them.
    pub fn role_spans(&self, role: &str) -> Option<Vec<Span>> {
        if let Some(spans) = self.segments.get(role) {
            return Some(spans.clone());
        }
        match role {
            "prompt" => Some(vec![Span::new(0, self.prompt_chars())]),
            "response" => Some(vec![Span::new(self.prompt_chars(), self.total_chars())]),
            _ => None,
        }
    }

    /// Indices of tokens whose interval overlaps any of `spans`.
    pub fn tokens_overlapping(&self, spans: &[Span]) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| spans.iter().any(|s| t.span().overlaps(s)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn label(&self, key: &str) -> Option<&str> {
        self.labels.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBlock {
    pub record_id: String,
    pub layer: i64,
    /// `n_tokens × d`, row `i` is token `i`.
    pub matrix: Array2<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub record_id: String,
    pub layer: i64,
    /// `heads × n_total × n_total`; rows attend, columns are attended.
    pub tensor: Array3<f32>,
}

/// Which token rows an embedding block covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingScope {
    /// Every token of `prompt ⌢ response`.
    #[default]
    Full,
    /// Only the first `prompt_token_count` tokens.
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpMeta {
    pub model: String,
    pub d_model: usize,
    pub n_heads: usize,
    pub seed: u64,
    #[serde(default)]
    pub embedding_scope: EmbeddingScope,
}

pub type BlockKey = (String, i64);

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DumpMeta,
    pub records: Vec<PromptRecord>,
    pub embeddings: BTreeMap<BlockKey, EmbeddingBlock>,
    pub attention: BTreeMap<BlockKey, AttentionBlock>,
}

impl Dataset {
    pub fn new(meta: DumpMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
            embeddings: BTreeMap::new(),
            attention: BTreeMap::new(),
        }
    }

    pub fn record(&self, id: &str) -> Option<&PromptRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn embedding(&self, id: &str, layer: i64) -> Option<&EmbeddingBlock> {
        self.embeddings.get(&(id.to_string(), layer))
    }

    pub fn attention(&self, id: &str, layer: i64) -> Option<&AttentionBlock> {
        self.attention.get(&(id.to_string(), layer))
    }

    pub fn insert_embedding(&mut self, block: EmbeddingBlock) {
        self.embeddings
            .insert((block.record_id.clone(), block.layer), block);
    }

    pub fn insert_attention(&mut self, block: AttentionBlock) {
        self.attention
            .insert((block.record_id.clone(), block.layer), block);
    }

    /// Sorted union of all layers that carry any block.
    pub fn layers(&self) -> Vec<i64> {
        let mut layers: Vec<i64> = self
            .embeddings
            .keys()
            .chain(self.attention.keys())
            .map(|(_, l)| *l)
            .collect();
        layers.sort_unstable();
        layers.dedup();
        layers
    }

    /// Number of embedding rows expected for a record under the dump scope.
    pub fn expected_embedding_rows(&self, record: &PromptRecord) -> usize {
        match self.meta.embedding_scope {
            EmbeddingScope::Full => record.tokens.len(),
            EmbeddingScope::Prompt => record.prompt_token_count,
        }
    }
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("missing blob {0}")]
    MissingBlob(String),
    #[error("blob {file} has {actual} bytes, expected {expected}")]
    BlobLength {
        file: String,
        expected: usize,
        actual: usize,
    },
    #[error("dangling index entry: {file} references unknown record '{record_id}'")]
    DanglingIndex { record_id: String, file: String },
    #[error("duplicate record id '{0}'")]
    DuplicateRecord(String),
    #[error("record id '{0}' cannot be used in a blob file name")]
    InvalidId(String),
    #[error("inconsistent dump: {0}")]
    Inconsistent(String),
    #[error("invariant violation in record '{record_id}': {message}")]
    Invariant { record_id: String, message: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_overlap_rule() {
        let a = Span::new(0, 5);
        assert!(a.overlaps(&Span::new(3, 7)));
        assert!(!a.overlaps(&Span::new(5, 9)));
        assert!(!a.overlaps(&Span::new(2, 2)));
    }

    #[test]
    fn char_slice_counts_scalars() {
        let s = "héllo wörld";
        assert_eq!(char_slice(s, Span::new(1, 5)), "éllo");
        assert_eq!(char_slice(s, Span::new(6, 11)), "wörld");
        assert_eq!(char_slice(s, Span::new(6, 99)), "wörld");
        assert_eq!(char_slice(s, Span::new(3, 3)), "");
    }

    #[test]
    fn builtin_roles() {
        let r = PromptRecord {
            id: "a".into(),
            prompt_text: "abc".into(),
            response_text: "de".into(),
            tokens: vec![],
            prompt_token_count: 0,
            segments: BTreeMap::new(),
            labels: BTreeMap::new(),
            layer_ids: vec![],
        };
        assert_eq!(r.role_spans("prompt"), Some(vec![Span::new(0, 3)]));
        assert_eq!(r.role_spans("response"), Some(vec![Span::new(3, 5)]));
        assert_eq!(r.role_spans("s_inf"), None);
    }
}
