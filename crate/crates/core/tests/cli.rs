mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use common::{data_path, load_table};
use smily::groups::{regular_rep, RepFile};
use smily::su2::{parse_spins, CGTable};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smily")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn validator() -> jsonschema::Validator {
    let text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/output.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(doc: &Value) {
    let v = validator();
    let errors: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn structure(doc: &Value) -> Vec<(u64, u64)> {
    let mut v: Vec<(u64, u64)> = doc["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| (b["dim"].as_u64().unwrap(), b["multiplicity"].as_u64().unwrap()))
        .collect();
    v.sort_unstable();
    v
}

#[test]
fn regular_s3_json_matches_schema() {
    let out = run(&["regular", path(&data_path("s3.txt")), "--exact-chars", path(&data_path("s3_characters.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out.stdout);
    assert_valid(&doc);
    assert_eq!(doc["kind"], "finite");
    assert_eq!(structure(&doc), vec![(1, 1), (1, 1), (2, 2)]);
    assert!(doc["report"]["chi_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn su2_json_matches_schema_and_csv_parses() {
    let out = run(&["su2", "3/2,1"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out.stdout);
    assert_valid(&doc);
    assert_eq!(doc["spins"], serde_json::json!(["3/2", "1"]));

    let csv = run(&["su2", "3/2,1", "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0));
    let table = CGTable::from_csv(std::str::from_utf8(&csv.stdout).unwrap(), &parse_spins("3/2,1").unwrap()).unwrap();
    let from_json: CGTable = serde_json::from_value(doc["table"].clone()).unwrap();
    assert_eq!(table.labels(), from_json.labels());
    for (a, b) in table.entries.iter().zip(&from_json.entries) {
        assert!((a.coefficient - b.coefficient).abs() <= 2e-16);
    }
}

#[test]
fn spin_zero_gives_identity_table() {
    let out = run(&["su2", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out.stdout);
    let entries = doc["table"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0]["coefficient"].as_f64(), Some(1.0));
}

#[test]
fn invalid_table_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "3\n1 2 3\n2 1 3\n3 3 1\n").unwrap();
    let out = run(&["regular", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err = json(&out.stderr);
    assert_valid(&err);
    assert_eq!(err["error"]["kind"], "NotAGroup");
    assert_eq!(err["error"]["exit_code"], 2);
}

#[test]
fn other_input_errors_exit_2() {
    for args in [
        vec!["regular", "/nonexistent/table.txt"],
        vec!["su2", "3/4"],
        vec!["su2", "1/2", "--retries", "0"],
        vec!["su2", "1/2", "--tol-zero=-1"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_valid(&json(&out.stderr));
    }
}

#[test]
fn exhausted_retries_exit_3() {
    let out = run(&["regular", path(&data_path("s3.txt")), "--tol-residual", "1e-300", "--retries", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let err = json(&out.stderr);
    assert_valid(&err);
    assert_eq!(err["error"]["exit_code"], 3);
}

#[test]
fn wrong_exact_characters_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let chars = dir.path().join("chars.json");
    let wrong: Vec<Vec<[f64; 2]>> = vec![vec![[5.0, 0.0]; 6]; 3];
    std::fs::write(&chars, serde_json::json!({ "characters": wrong }).to_string()).unwrap();
    let out = run(&["regular", path(&data_path("s3.txt")), "--exact-chars", path(&chars)]);
    assert_eq!(out.status.code(), Some(4));
    let doc = json(&out.stdout);
    assert_valid(&doc);
    assert!(doc["report"]["chi_error"].as_f64().unwrap() > 1.0);
}

#[test]
fn rep_path_agrees_with_regular_path() {
    let dir = tempfile::tempdir().unwrap();
    let rep_file = dir.path().join("s3_rep.json");
    let rep = regular_rep(&load_table("s3.txt"));
    std::fs::write(&rep_file, serde_json::to_string(&RepFile::from_rep(&rep)).unwrap()).unwrap();
    let via_rep = run(&["rep", path(&rep_file)]);
    let via_table = run(&["regular", path(&data_path("s3.txt"))]);
    assert_eq!(via_rep.status.code(), Some(0));
    let (a, b) = (json(&via_rep.stdout), json(&via_table.stdout));
    assert_valid(&a);
    assert_eq!(structure(&a), structure(&b));
}

#[test]
fn diagonal_z2_splits_into_two_blocks() {
    let out = run(&["rep", path(&data_path("z2_diag.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(structure(&json(&out.stdout)), vec![(1, 1), (1, 1)]);
}

#[test]
fn output_flag_writes_the_document() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("out.json");
    let out = run(&["su2", "1/2,1/2", "--output", path(&file)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read(&file).unwrap();
    assert_eq!(written, run(&["su2", "1/2,1/2"]).stdout);
    assert_valid(&json(&written));
}

#[test]
fn text_format_lists_blocks() {
    let out = run(&["regular", path(&data_path("a4.txt")), "--format", "text"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("group order 12"));
}
