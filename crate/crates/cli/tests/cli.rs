use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn snipsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snipsearch"))
        .args(args)
        .env_remove("SNIPSEARCH_INDEX")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = snipsearch(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(text.lines().last().expect("output line")).unwrap()
}

fn error_json(args: &[&str]) -> Value {
    let out = snipsearch(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let text = String::from_utf8(out.stderr).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "one error line: {text}");
    serde_json::from_str(text.trim_end()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ingest_twins(dir: &Path) -> PathBuf {
    let index = dir.join("twins.idx");
    let fx = fixture("twin_pages.json");
    ok_json(&["ingest", "--format", "form", "--alphabet", "flamingo", s(&fx), "--out", s(&index)]);
    index
}

#[test]
fn ingest_reports_pages_and_writes_a_loadable_index() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("p.idx");
    let fx = fixture("publaynet_small.json");
    let v = ok_json(&["ingest", "--format", "coco", "--alphabet", "publaynet", s(&fx), "--out", s(&index)]);
    assert_eq!(v["n_pages"], 2);
    assert_eq!(v["n_elements"], 11);
    let stats = ok_json(&["stats", "--index", s(&index)]);
    assert_eq!(stats["length_histogram"]["5"], 1);
    assert_eq!(stats["length_histogram"]["6"], 1);
}

#[test]
fn ingest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = ingest_twins(dir.path());
    let b = dir.path().join("again.idx");
    let fx = fixture("twin_pages.json");
    ok_json(&["ingest", "--format", "form", "--alphabet", "flamingo", s(&fx), "--out", s(&b)]);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn malformed_input_gives_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"pages": [{"width": 10, "height": 10, "elements": [{"kind": "chart", "bbox": [0,0,1,1]}]}]}"#)
        .unwrap();
    let out = dir.path().join("x.idx");
    let e = error_json(&["ingest", "--format", "form", "--alphabet", "flamingo", s(&bad), "--out", s(&out)]);
    assert_eq!(e["code"], "malformed_annotation");
    assert_eq!(e["detail"]["record"], "pages[0].elements[0]");
    assert!(!out.exists());
}

#[test]
fn missing_index_is_an_io_error() {
    let e = error_json(&["stats", "--index", "/nonexistent/index"]);
    assert_eq!(e["code"], "io_failure");
}

#[test]
fn search_region_on_twin_pages_finds_the_twin() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest_twins(dir.path());
    let v = ok_json(&[
        "search", "--index", s(&index), "--doc", "form-a", "--page", "0", "--bbox", "0,0,612,792", "--json",
    ]);
    let m = v["matches"].as_array().unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m[0]["doc_id"], "form-b");
    assert_eq!(m[0]["score"], 1.0);
    assert_eq!(m[0]["bbox"], serde_json::json!([40.0, 40.0, 572.0, 250.0]));
    assert!(v.get("elapsed_ms").is_none());
}

#[test]
fn search_index_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest_twins(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_snipsearch"))
        .args(["search", "--lstr", "TTW", "--json"])
        .env("SNIPSEARCH_INDEX", &index)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["query_lstr"], "TTW");
}

#[test]
fn search_errors_are_coded() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest_twins(dir.path());
    let e = error_json(&["search", "--index", s(&index), "--doc", "zzz", "--page", "0", "--bbox", "0,0,1,1"]);
    assert_eq!(e["code"], "unknown_document");
    let e = error_json(&[
        "search", "--index", s(&index), "--doc", "form-a", "--page", "0", "--bbox", "590,700,600,710",
    ]);
    assert_eq!(e["code"], "empty_snippet");
    let e = error_json(&["search", "--index", s(&index), "--lstr", "TW", "--th", "1.5"]);
    assert_eq!(e["code"], "invalid_request");
}

#[test]
fn mine_is_reproducible_and_serial_matches_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest_twins(dir.path());
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let base = ["mine", "--index", s(&index), "--min-len", "2", "--max-len", "5", "--seed", "7"];
    let stats = ok_json(&[&base[..], &["--out", s(&a)]].concat());
    ok_json(&[&base[..], &["--out", s(&b), "--serial"]].concat());
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    // Every snippet of one twin reappears verbatim on the other.
    assert!(stats["n_pairs"].as_u64().unwrap() >= 2);
    for line in String::from_utf8(bytes).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        if v["query"]["doc"] == v["target"]["doc"] {
            let own = &v["query"]["elem_range"];
            assert!(v["gt"].as_array().unwrap().iter().all(|g| &g["elem_range"] != own));
        }
    }
}

#[test]
fn predict_then_eval_reproduces_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest_twins(dir.path());
    let pairs = dir.path().join("pairs.jsonl");
    ok_json(&["mine", "--index", s(&index), "--seed", "1", "--out", s(&pairs)]);
    let preds = dir.path().join("pred.jsonl");
    let out = snipsearch(&["predict", "--index", s(&index), "--pairs", s(&pairs), "--out", s(&preds)]);
    assert!(out.status.success());
    let report_path = dir.path().join("report.json");
    let v = ok_json(&["eval", "--pred", s(&preds), "--gt", s(&pairs), "--report", s(&report_path)]);
    assert_eq!(v["map"], 100.0);
    let saved: Value = serde_json::from_slice(&fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn baselines_emit_one_line_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest_twins(dir.path());
    let pairs = dir.path().join("pairs.jsonl");
    ok_json(&["mine", "--index", s(&index), "--seed", "3", "--out", s(&pairs)]);
    let n = fs::read_to_string(&pairs).unwrap().lines().count();
    for method in ["ssd", "ncc"] {
        let preds = dir.path().join(format!("{method}.jsonl"));
        let out = snipsearch(&[
            "baseline", method, "--index", s(&index), "--pairs", s(&pairs), "--out", s(&preds), "--cell", "4",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let lines: Vec<Value> =
            fs::read_to_string(&preds).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), n);
        for (i, l) in lines.iter().enumerate() {
            assert_eq!(l["pair_id"], i);
        }
    }
    assert!(!snipsearch(&["baseline", "sad", "--index", s(&index), "--pairs", s(&pairs), "--out", "x"])
        .status
        .success());
}

#[test]
fn split_labels_every_test_query() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest_twins(dir.path());
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    ok_json(&["mine", "--index", s(&index), "--seed", "1", "--out", s(&train)]);
    ok_json(&["mine", "--index", s(&index), "--seed", "2", "--max-len", "3", "--out", s(&test)]);
    let labels = dir.path().join("labels.jsonl");
    let v = ok_json(&["split", "--train", s(&train), "--test", s(&test), "--out", s(&labels)]);
    let n_test = fs::read_to_string(&test).unwrap().lines().count() as u64;
    assert_eq!(v["seen"].as_u64().unwrap() + v["unseen"].as_u64().unwrap(), n_test);
    assert_eq!(fs::read_to_string(&labels).unwrap().lines().count() as u64, n_test);
}

#[test]
fn human_table_is_aggregated() {
    let v = ok_json(&["human", "--counts", s(&fixture("human_counts.csv"))]);
    assert_eq!(v["splits"][0]["metrics"]["precision"], 90.0);
    assert_eq!(v["splits"][0]["metrics"]["recall"], 75.0);
    assert_eq!(v["average"]["precision"], 90.0);
    assert_eq!(v["average"]["recall"], 82.5);
}

#[test]
fn fusion_check_tiny_passes() {
    let v = ok_json(&["fusion-check", "--profile", "tiny", "--seed", "3"]);
    assert_eq!(v["passed"], true);
    assert_eq!(v["report"]["f_sim_shape"], serde_json::json!([8, 80]));
    let e = error_json(&["fusion-check", "--profile", "huge"]);
    assert_eq!(e["code"], "invalid_argument");
}
