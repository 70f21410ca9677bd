use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::validate::{check_dataset, Finding, Severity};
use super::{AttentionBlock, Dataset, DumpError, DumpMeta, EmbeddingBlock, PromptRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_EXT: &str = "bin";
const FORMAT_NAME: &str = "iclscope-dump";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(super) struct BlockEntry {
    pub record_id: String,
    pub layer: i64,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(super) struct Manifest {
    pub format: String,
    pub version: u32,
    pub meta: DumpMeta,
    pub records: Vec<PromptRecord>,
    pub embeddings: Vec<BlockEntry>,
    pub attention: Vec<BlockEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Kind {
    Emb,
    Attn,
}

impl Kind {
    fn tag(self) -> &'static str {
        match self {
            Kind::Emb => "emb",
            Kind::Attn => "attn",
        }
    }
}

pub(super) fn blob_name(record_id: &str, kind: Kind, layer: i64) -> String {
    format!("{record_id}.{}.{layer}.{BLOB_EXT}", kind.tag())
}

fn io_err(path: &Path, source: std::io::Error) -> DumpError {
    DumpError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && !id.contains(['/', '\\', '\0'])
}

/// Writes `dataset` to `dir` (created if needed).
///
/// Output is deterministic: the manifest has sorted keys and records sorted
/// by id, blobs are raw row-major little-endian `f32`.
pub fn write_dump(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<(), DumpError> {
    let dir = dir.as_ref();
    let mut seen = HashSet::new();
    for r in &dataset.records {
        if !seen.insert(r.id.as_str()) {
            return Err(DumpError::DuplicateRecord(r.id.clone()));
        }
        if !valid_id(&r.id) {
            return Err(DumpError::InvalidId(r.id.clone()));
        }
    }
    for b in dataset.embeddings.values() {
        if b.matrix.ncols() != dataset.meta.d_model {
            return Err(DumpError::Inconsistent(format!(
                "embedding {}@{} has d={}, dump declares d={}",
                b.record_id,
                b.layer,
                b.matrix.ncols(),
                dataset.meta.d_model
            )));
        }
    }
    for b in dataset.attention.values() {
        if b.tensor.shape()[0] != dataset.meta.n_heads {
            return Err(DumpError::Inconsistent(format!(
                "attention {}@{} has {} heads, dump declares {}",
                b.record_id,
                b.layer,
                b.tensor.shape()[0],
                dataset.meta.n_heads
            )));
        }
    }
    let report = check_dataset(dataset);
    if let Some(f) = report.errors().next() {
        return Err(DumpError::Invariant {
            record_id: f.record_id.clone().unwrap_or_default(),
            message: f.message.clone(),
        });
    }

    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let mut records = dataset.records.clone();
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let mut embeddings = Vec::with_capacity(dataset.embeddings.len());
    for ((id, layer), block) in &dataset.embeddings {
        let file = blob_name(id, Kind::Emb, *layer);
        write_blob(&dir.join(&file), block.matrix.iter())?;
        embeddings.push(BlockEntry {
            record_id: id.clone(),
            layer: *layer,
            file,
            shape: block.matrix.shape().to_vec(),
        });
    }
    let mut attention = Vec::with_capacity(dataset.attention.len());
    for ((id, layer), block) in &dataset.attention {
        let file = blob_name(id, Kind::Attn, *layer);
        write_blob(&dir.join(&file), block.tensor.iter())?;
        attention.push(BlockEntry {
            record_id: id.clone(),
            layer: *layer,
            file,
            shape: block.tensor.shape().to_vec(),
        });
    }

    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        meta: dataset.meta.clone(),
        records,
        embeddings,
        attention,
    };
    // Round-trip through Value: its object map is ordered, giving sorted keys.
    let value = serde_json::to_value(&manifest).map_err(|e| DumpError::Manifest(e.to_string()))?;
    let mut text =
        serde_json::to_string_pretty(&value).map_err(|e| DumpError::Manifest(e.to_string()))?;
    text.push('\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn write_blob<'a>(path: &Path, values: impl Iterator<Item = &'a f32>) -> Result<(), DumpError> {
    let bytes: Vec<u8> = values.flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub(super) fn load_manifest(dir: &Path) -> Result<Manifest, DumpError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DumpError::Manifest(e.to_string()))?;
    if manifest.format != FORMAT_NAME {
        return Err(DumpError::Manifest(format!(
            "unexpected format '{}'",
            manifest.format
        )));
    }
    if manifest.version != FORMAT_VERSION {
        return Err(DumpError::Manifest(format!(
            "unsupported version {}",
            manifest.version
        )));
    }
    Ok(manifest)
}

pub(super) fn load_blob(dir: &Path, entry: &BlockEntry) -> Result<Vec<f32>, DumpError> {
    if !valid_id(&entry.file) {
        return Err(DumpError::Manifest(format!(
            "bad blob name '{}'",
            entry.file
        )));
    }
    let path = dir.join(&entry.file);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DumpError::MissingBlob(entry.file.clone()))
        }
        Err(e) => return Err(io_err(&path, e)),
    };
    let expected = entry.shape.iter().product::<usize>() * 4;
    if bytes.len() != expected {
        return Err(DumpError::BlobLength {
            file: entry.file.clone(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(super) fn embedding_from(
    entry: &BlockEntry,
    data: Vec<f32>,
) -> Result<EmbeddingBlock, DumpError> {
    let [n, d] = entry.shape[..] else {
        return Err(DumpError::Manifest(format!(
            "{}: embedding shape must have 2 dims, got {:?}",
            entry.file, entry.shape
        )));
    };
    let matrix = Array2::from_shape_vec((n, d), data)
        .map_err(|e| DumpError::Manifest(format!("{}: {e}", entry.file)))?;
    Ok(EmbeddingBlock {
        record_id: entry.record_id.clone(),
        layer: entry.layer,
        matrix,
    })
}

pub(super) fn attention_from(
    entry: &BlockEntry,
    data: Vec<f32>,
) -> Result<AttentionBlock, DumpError> {
    let [h, n, m] = entry.shape[..] else {
        return Err(DumpError::Manifest(format!(
            "{}: attention shape must have 3 dims, got {:?}",
            entry.file, entry.shape
        )));
    };
    let tensor = Array3::from_shape_vec((h, n, m), data)
        .map_err(|e| DumpError::Manifest(format!("{}: {e}", entry.file)))?;
    Ok(AttentionBlock {
        record_id: entry.record_id.clone(),
        layer: entry.layer,
        tensor,
    })
}

/// Reads a dump written by [`write_dump`] or by an external extractor.
///
/// Loading is eager. Any structural or invariant error aborts the read;
/// attention row-sum deviations are not errors here (see `validate_dump`).
pub fn read_dump(dir: impl AsRef<Path>) -> Result<Dataset, DumpError> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir)?;

    let mut ids = HashSet::new();
    for r in &manifest.records {
        if !ids.insert(r.id.as_str()) {
            return Err(DumpError::DuplicateRecord(r.id.clone()));
        }
    }
    for entry in manifest.embeddings.iter().chain(&manifest.attention) {
        if !ids.contains(entry.record_id.as_str()) {
            return Err(DumpError::DanglingIndex {
                record_id: entry.record_id.clone(),
                file: entry.file.clone(),
            });
        }
    }

    let mut dataset = Dataset::new(manifest.meta.clone());
    let mut records = manifest.records;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    dataset.records = records;
    for entry in &manifest.embeddings {
        let data = load_blob(dir, entry)?;
        dataset.insert_embedding(embedding_from(entry, data)?);
    }
    for entry in &manifest.attention {
        let data = load_blob(dir, entry)?;
        dataset.insert_attention(attention_from(entry, data)?);
    }

    let report = check_dataset(&dataset);
    if let Some(f) = report
        .findings
        .iter()
        .find(|f| f.severity == Severity::Error)
    {
        return Err(invariant(f));
    }
    Ok(dataset)
}

fn invariant(f: &Finding) -> DumpError {
    DumpError::Invariant {
        record_id: f.record_id.clone().unwrap_or_default(),
        message: f.message.clone(),
    }
}
