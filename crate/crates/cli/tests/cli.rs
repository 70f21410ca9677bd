use std::path::Path;
use std::process::{Command, Output};

use iclscope::repgeom::{
    cosine_similarity_matrix, hypothesis_alignment, hypothesis_from_labels, prompt_vectors,
    standardize, Pooling, TokenSelection,
};
use iclscope::stats::CorrelationMethod;
use iclscope::tensorstore::read_dump;
use serde_json::Value;

fn iclscope(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iclscope"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(args: &[&str], out: &Path) -> Output {
    let o = iclscope(args, out);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["gen", "--task", "regression", "--seed", "7"], out);
    }
    for file in ["suite.jsonl", "oracle_responses.jsonl", "gen_summary.json"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let mut blobs = 0;
    for entry in std::fs::read_dir(a.join("dump")).unwrap() {
        let name = entry.unwrap().file_name();
        let (x, y) = (a.join("dump").join(&name), b.join("dump").join(&name));
        assert_eq!(
            std::fs::read(x).unwrap(),
            std::fs::read(y).unwrap(),
            "{name:?}"
        );
        blobs += 1;
    }
    assert!(blobs > 1);
    let run = json(&a.join("run.json"));
    assert_eq!(run["seed"], 7);
    assert_eq!(run["status"]["ok"], true);
}

#[test]
fn rsa_alignment_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(&["gen", "--task", "regression", "--seed", "3"], &gen);
    let dump = gen.join("dump");
    let rsa = dir.path().join("rsa");
    ok(
        &[
            "rsa",
            "--dump",
            dump.to_str().unwrap(),
            "--hypothesis",
            "label:slope",
            "--layers",
            "2",
            "--n-perm",
            "99",
        ],
        &rsa,
    );
    let report = json(&rsa.join("report.json"));
    let row = &report["alignments"][0];
    assert_eq!(row["layer"], 2);
    let reported = row["alignment"].as_f64().unwrap();

    let ds = read_dump(&dump).unwrap();
    let ids: Vec<String> = ds.records.iter().map(|r| r.id.clone()).collect();
    let v = prompt_vectors(
        &ds,
        &ids,
        2,
        &TokenSelection::AllPromptTokens,
        Pooling::Mean,
    )
    .unwrap();
    let m = cosine_similarity_matrix(&standardize(&v).unwrap()).unwrap();
    let h = hypothesis_from_labels(ds.records.iter(), "slope").unwrap();
    let expected = hypothesis_alignment(&m, &h, CorrelationMethod::Pearson).unwrap();
    assert_eq!(reported, expected);
    assert!(rsa.join("alignments.csv").exists());
}

#[test]
fn oracle_graph_responses_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(
        &[
            "gen",
            "--task",
            "graph",
            "--seed",
            "5",
            "--set",
            "gen.dump=false",
        ],
        &gen,
    );
    let out = dir.path().join("score");
    ok(
        &[
            "score",
            "--task",
            "graph",
            "--suite",
            gen.join("suite.jsonl").to_str().unwrap(),
            "--responses",
            gen.join("oracle_responses.jsonl").to_str().unwrap(),
        ],
        &out,
    );
    let summary = json(&out.join("score_summary.json"));
    assert_eq!(summary["graph"]["success_rate"], 1.0);
    assert!(summary["graph"]["n"].as_u64().unwrap() > 0);
    assert_eq!(summary["graph"]["missing"], 0);
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(
        &[
            "gen",
            "--task",
            "regression",
            "--seed",
            "1",
            "--set",
            "gen.regression.n_lines=2",
        ],
        &gen,
    );
    let dump = gen.join("dump");
    ok(
        &["validate", "--dump", dump.to_str().unwrap()],
        &dir.path().join("v1"),
    );

    let blob = std::fs::read_dir(&dump)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "bin"))
        .unwrap();
    let bytes = std::fs::read(&blob).unwrap();
    std::fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
    let o = iclscope(
        &["validate", "--dump", dump.to_str().unwrap()],
        &dir.path().join("v2"),
    );
    assert!(!o.status.success());
    let report = json(&dir.path().join("v2/validation.json"));
    assert!(!report["findings"].as_array().unwrap().is_empty());
}

#[test]
fn errors_are_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = iclscope(
        &[
            "rsa",
            "--dump",
            "/nonexistent/dump",
            "--hypothesis",
            "label:x",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
    let stderr = String::from_utf8(o.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    let v: Value = serde_json::from_str(lines[0]).unwrap();
    assert!(v["error"].is_string());
    assert!(v["message"].is_string());

    let o = iclscope(
        &[
            "gen",
            "--task",
            "regression",
            "--set",
            "gen.regression.n_lines=many",
        ],
        dir.path(),
    );
    let v: Value = serde_json::from_str(String::from_utf8(o.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "config");
}
