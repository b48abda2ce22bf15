use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wayfind-sim")).args(args).output().expect("binary runs")
}

fn station_doc() -> Value {
    serde_json::from_str(include_str!("../scenarios/station.json")).unwrap()
}

fn write_doc(dir: &Path, doc: &Value) -> String {
    let p = dir.join("scenario.json");
    std::fs::write(&p, doc.to_string()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_bundled_scenario() {
    let out = sim(&["validate"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("ok: 2 floors"), "{text}");
}

#[test]
fn duplicate_sign_id_is_rejected_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = station_doc();
    let signs = doc["signs"].as_array_mut().unwrap();
    let mut copy = signs[0].clone();
    copy["center"][1] = Value::from(14.0);
    signs.push(copy);
    let id = signs[0]["id"].as_u64().unwrap();
    let out = sim(&["validate", "--scenario", &write_doc(dir.path(), &doc)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("duplicate sign id {id}")), "{err}");
}

#[test]
fn dangling_goal_reference_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = station_doc();
    doc["signs"][1]["entries"][0]["action"] = serde_json::json!({ "direct_to": "nowhere" });
    let out = sim(&["validate", "--scenario", &write_doc(dir.path(), &doc)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn missing_file_is_an_io_error() {
    let out = sim(&["validate", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(sim(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(sim(&["run"]).status.code(), Some(64));
    assert_eq!(sim(&["run", "--out", "x", "--seed", "seven"]).status.code(), Some(64));
    assert_eq!(sim(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_override_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = sim(&["run", "--out", out_dir.to_str().unwrap(), "--dt=0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
}
