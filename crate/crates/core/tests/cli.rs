use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn held(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_held")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = held(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn digest(p: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(p).unwrap()))
}

const SMALL: &str = "n_docs = 6\nmin_objects = 60\nmax_objects = 90\nmax_depth = 5\nmin_heading_depth = 3\n";

fn small_corpus(dir: &Path, name: &str) -> std::path::PathBuf {
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.join(name);
    ok(&["gen-corpus", "--config", s(&cfg), "--out-dir", s(&out), "--seed", "3"]);
    out
}

#[test]
fn eval_of_gold_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_corpus(dir.path(), "c");
    let report = dir.path().join("eval.json");
    ok(&["eval", "--pred", s(&c.join("gold.json")), "--gold", s(&c.join("gold.json")), "--out", s(&report)]);
    let v = json(&report);
    assert_eq!(v["node_accuracy"], 1.0);
    assert_eq!(v["legacy_depth_accuracy"], 1.0);
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("bad.jsonl");
    let mut text: String = (0..16)
        .map(|i| format!("{{\"id\":{i},\"kind\":\"paragraph\",\"text\":\"t\"}}\n"))
        .collect();
    text.push_str("{\"id\": 16, \"kind\": \n");
    std::fs::write(&docs, text).unwrap();
    let c = small_corpus(dir.path(), "c");
    let model = dir.path().join("model.json");
    ok(&["train", "--docs", s(&c.join("docs.jsonl")), "--gold", s(&c.join("gold.json")), "--out", s(&model)]);
    let out = held(&["infer", "--docs", s(&docs), "--model", s(&model), "--out", s(&dir.path().join("p.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl:17"), "{err}");
}

#[test]
fn missing_input_is_an_io_error() {
    let out = held(&["eval", "--pred", "/nonexistent/p.json", "--gold", "/nonexistent/g.json", "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    assert_eq!(held(&["infer", "--order", "sideways"]).status.code(), Some(2));
}

#[test]
fn full_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = small_corpus(d, "c");
    let c2 = small_corpus(d, "c2");
    for f in ["docs.jsonl", "gold.json", "queries.jsonl", "qrels.jsonl"] {
        assert_eq!(digest(&c.join(f)), digest(&c2.join(f)), "{f}");
    }

    let docs = c.join("docs.jsonl");
    let gold = c.join("gold.json");
    let model = d.join("model.json");
    let ranker = d.join("ranker.json");
    ok(&[
        "train", "--docs", s(&docs), "--gold", s(&gold), "--out", s(&model), "--error-rate", "0.1",
        "--queries", s(&c.join("queries.jsonl")), "--qrels", s(&c.join("qrels.jsonl")), "--rank-out", s(&ranker),
    ]);
    assert!(json(&model).is_object());
    assert!(d.join("model.config.json").exists());

    let mut preds = Vec::new();
    for k in 0..2 {
        let pred = d.join(format!("pred{k}.json"));
        let stats = d.join(format!("stats{k}.csv"));
        ok(&[
            "--jobs", if k == 0 { "1" } else { "4" }, "infer", "--docs", s(&docs), "--model", s(&model),
            "--out", s(&pred), "--stats", s(&stats), "--order", "r2l",
        ]);
        let csv = std::fs::read_to_string(&stats).unwrap();
        assert!(csv.starts_with("doc_id,n_objects,n_headings,inquiries,wall_ms"));
        assert_eq!(csv.lines().count(), 7);
        preds.push(digest(&pred));
    }
    assert_eq!(preds[0], preds[1]);

    let report = d.join("eval.json");
    ok(&["eval", "--pred", s(&d.join("pred0.json")), "--gold", s(&gold), "--out", s(&report)]);
    let acc = json(&report)["node_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let bench = d.join("bench.csv");
    ok(&["bench-traversal", "--gold", s(&gold), "--docs", s(&docs), "--out", s(&bench)]);
    assert_eq!(std::fs::read_to_string(&bench).unwrap().lines().count(), 7);

    let run = d.join("run.tsv");
    ok(&[
        "retrieve", "--docs", s(&docs), "--trees", s(&d.join("pred0.json")), "--queries",
        s(&c.join("queries.jsonl")), "--model", s(&ranker), "--out", s(&run), "--qrels", s(&c.join("qrels.jsonl")),
    ]);
    let tsv = std::fs::read_to_string(&run).unwrap();
    assert!(tsv.starts_with("query_id\tpassage_id\trank\tscore"));
    let m = json(&d.join("run.metrics.json"));
    assert!(m["map"].as_f64().unwrap() > 0.0);
}
