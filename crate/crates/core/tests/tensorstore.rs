use std::collections::BTreeMap;
use std::path::Path;

use iclscope::tensorstore::{
    check_dataset, read_dump, validate_dump, write_dump, AttentionBlock, Dataset, DumpError,
    DumpMeta, EmbeddingBlock, PromptRecord, Severity, Span, Token, MANIFEST_FILE,
};
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn record(id: &str) -> PromptRecord {
    PromptRecord {
        id: id.into(),
        prompt_text: "ab".into(),
        response_text: "c".into(),
        tokens: vec![
            Token {
                text: "a".into(),
                start: 0,
                end: 1,
            },
            Token {
                text: "b".into(),
                start: 1,
                end: 2,
            },
            Token {
                text: "c".into(),
                start: 2,
                end: 3,
            },
        ],
        prompt_token_count: 2,
        segments: BTreeMap::from([("s_inf".to_string(), vec![Span::new(0, 1)])]),
        labels: BTreeMap::from([("class".to_string(), "x".to_string())]),
        layer_ids: vec![0],
    }
}

fn meta(d: usize, h: usize) -> DumpMeta {
    DumpMeta {
        model: "test".into(),
        d_model: d,
        n_heads: h,
        seed: 1,
        embedding_scope: Default::default(),
    }
}

fn uniform_attention(id: &str, h: usize, n: usize) -> AttentionBlock {
    AttentionBlock {
        record_id: id.into(),
        layer: 0,
        tensor: Array3::from_elem((h, n, n), 1.0 / n as f32),
    }
}

fn dataset(values: &[f32]) -> Dataset {
    let mut ds = Dataset::new(meta(2, 1));
    for (k, id) in ["r1", "r0"].iter().enumerate() {
        ds.records.push(record(id));
        let v: Vec<f32> = values
            .iter()
            .map(|&x| if k == 0 { x } else { x + k as f32 })
            .collect();
        ds.insert_embedding(EmbeddingBlock {
            record_id: id.to_string(),
            layer: 0,
            matrix: Array2::from_shape_vec((3, 2), v).unwrap(),
        });
        ds.insert_attention(uniform_attention(id, 1, 3));
    }
    ds
}

fn hashes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let digest = Sha256::digest(std::fs::read(e.path()).unwrap()).to_vec();
            (e.file_name().to_string_lossy().into_owned(), digest)
        })
        .collect()
}

fn sorted_by_id(mut ds: Dataset) -> Dataset {
    ds.records.sort_by(|a, b| a.id.cmp(&b.id));
    ds
}

#[test]
fn eight_byte_blob_and_shape() {
    let mut ds = Dataset::new(meta(2, 1));
    let mut r = record("one");
    r.tokens.truncate(1);
    r.prompt_text = "a".into();
    r.response_text.clear();
    r.prompt_token_count = 1;
    r.segments.clear();
    ds.records.push(r);
    ds.insert_embedding(EmbeddingBlock {
        record_id: "one".into(),
        layer: 0,
        matrix: Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap(),
    });
    let dir = tempfile::tempdir().unwrap();
    write_dump(&ds, dir.path()).unwrap();
    let blob = std::fs::read(dir.path().join("one.emb.0.bin")).unwrap();
    assert_eq!(blob, [0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap())
            .unwrap();
    assert_eq!(
        manifest["embeddings"][0]["shape"],
        serde_json::json!([1, 2])
    );
}

#[test]
fn round_trip_and_hashes() {
    let ds = dataset(&[0.5, -1.0, 2.0, 3.25, 1e-7, -0.0]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_dump(&ds, a.path()).unwrap();
    write_dump(&ds, b.path()).unwrap();
    assert_eq!(hashes(a.path()), hashes(b.path()));
    let back = read_dump(a.path()).unwrap();
    assert_eq!(back, sorted_by_id(ds));
}

#[test]
fn manifest_records_are_sorted() {
    let ds = dataset(&[0.0; 6]);
    let dir = tempfile::tempdir().unwrap();
    write_dump(&ds, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(text.find("\"r0\"").unwrap() < text.find("\"r1\"").unwrap());
}

#[test]
fn truncated_blob_names_file() {
    let ds = dataset(&[0.0; 6]);
    let dir = tempfile::tempdir().unwrap();
    write_dump(&ds, dir.path()).unwrap();
    let path = dir.path().join("r0.attn.0.bin");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    let err = read_dump(dir.path()).unwrap_err();
    assert!(matches!(err, DumpError::BlobLength { .. }));
    assert!(err.to_string().contains("r0.attn.0.bin"));

    let report = validate_dump(dir.path());
    assert!(report.has_errors());
}

#[test]
fn missing_blob_is_reported() {
    let ds = dataset(&[0.0; 6]);
    let dir = tempfile::tempdir().unwrap();
    write_dump(&ds, dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("r1.emb.0.bin")).unwrap();
    assert!(read_dump(dir.path())
        .unwrap_err()
        .to_string()
        .contains("r1.emb.0.bin"));
}

fn edit_manifest(dir: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join(MANIFEST_FILE);
    let mut m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    f(&mut m);
    std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
}

#[test]
fn dangling_index_entry() {
    let ds = dataset(&[0.0; 6]);
    let dir = tempfile::tempdir().unwrap();
    write_dump(&ds, dir.path()).unwrap();
    edit_manifest(dir.path(), |m| {
        m["attention"][1]["record_id"] = "nobody".into()
    });
    let err = read_dump(dir.path()).unwrap_err();
    assert!(err.to_string().contains("dangling index entry"), "{err}");
}

#[test]
fn malformed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(MANIFEST_FILE), "{ not json").unwrap();
    assert!(matches!(
        read_dump(dir.path()).unwrap_err(),
        DumpError::Manifest(_)
    ));
}

#[test]
fn valid_dump_has_no_errors() {
    let ds = dataset(&[0.0; 6]);
    let dir = tempfile::tempdir().unwrap();
    write_dump(&ds, dir.path()).unwrap();
    let report = validate_dump(dir.path());
    assert_eq!(report.errors().count(), 0, "{:?}", report.findings);
    assert_eq!(report.warnings().count(), 0);
}

#[test]
fn half_row_is_one_warning() {
    let mut ds = dataset(&[0.0; 6]);
    let block = ds.attention.get_mut(&("r1".to_string(), 0)).unwrap();
    block.tensor[[0, 2, 0]] = 0.0;
    block.tensor[[0, 2, 1]] = 0.25;
    block.tensor[[0, 2, 2]] = 0.25;
    let dir = tempfile::tempdir().unwrap();
    write_dump(&ds, dir.path()).unwrap();
    let report = validate_dump(dir.path());
    assert_eq!(report.errors().count(), 0);
    let warnings: Vec<_> = report.warnings().collect();
    assert_eq!(warnings.len(), 1);
    let w = warnings[0];
    assert_eq!(w.severity, Severity::Warning);
    assert_eq!(w.record_id.as_deref(), Some("r1"));
    assert_eq!((w.layer, w.head, w.row), (Some(0), Some(0), Some(2)));
}

#[test]
fn segment_past_end_is_one_error() {
    let ds = dataset(&[0.0; 6]);
    let dir = tempfile::tempdir().unwrap();
    write_dump(&ds, dir.path()).unwrap();
    edit_manifest(dir.path(), |m| {
        m["records"][0]["segments"]["s_inf"] = serde_json::json!([[0, 9]]);
    });
    let report = validate_dump(dir.path());
    assert_eq!(report.errors().count(), 1, "{:?}", report.findings);
    assert!(read_dump(dir.path())
        .unwrap_err()
        .to_string()
        .contains("r0"));
}

#[test]
fn check_dataset_flags_shape_mismatch() {
    let mut ds = dataset(&[0.0; 6]);
    ds.insert_embedding(EmbeddingBlock {
        record_id: "r0".into(),
        layer: 0,
        matrix: Array2::zeros((2, 2)),
    });
    assert!(check_dataset(&ds).has_errors());
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(32) })]

    #[test]
    fn write_read_write_is_identical(values in prop::collection::vec(-1e6f32..1e6, 6)) {
        let ds = dataset(&values);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_dump(&ds, a.path()).unwrap();
        let back = read_dump(a.path()).unwrap();
        write_dump(&back, b.path()).unwrap();
        prop_assert_eq!(hashes(a.path()), hashes(b.path()));
        prop_assert_eq!(back, sorted_by_id(ds));
    }

    #[test]
    fn floats_are_little_endian(v in any::<f32>().prop_filter("finite", |v| v.is_finite())) {
        let ds = dataset(&[v, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let dir = tempfile::tempdir().unwrap();
        write_dump(&ds, dir.path()).unwrap();
        let blob = std::fs::read(dir.path().join("r1.emb.0.bin")).unwrap();
        prop_assert_eq!(&blob[..4], &v.to_le_bytes()[..]);
    }
}
