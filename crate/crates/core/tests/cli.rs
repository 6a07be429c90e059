use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

fn run(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_creature"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().expect("stdin").write_all(input.as_bytes()).expect("write stdin");
    child.wait_with_output().expect("binary exits")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON report")
}

fn identity_system() -> Value {
    json!({"x_size": 2, "y_size": 2, "rel": [[true, false], [false, true]]})
}

#[test]
fn norm_prints_the_norm() {
    let out = run(&["norm"], r#"{"creature": {"arena": 4, "cap": 2, "members": [[0, 1], [2, 3]]}}"#);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");
}

#[test]
fn tukey_check_identity_is_ok() {
    let input = json!({"r": identity_system(), "r2": identity_system(), "pair": {"f": [0, 1], "g": [0, 1]}});
    let out = run(&["tukey", "check"], &input.to_string());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"], "Ok");
}

#[test]
fn tukey_counterexample_exits_one_with_witness() {
    let loose = json!({"x_size": 2, "y_size": 2, "rel": [[true, true], [false, true]]});
    let input = json!({"r": identity_system(), "r2": loose, "pair": {"f": [0, 1], "g": [0, 1]}});
    let out = run(&["tukey", "check"], &input.to_string());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["result"]["Counterexample"], json!({"x": 0, "y": 1}));
}

#[test]
fn family_verify_flags_corrupted_d0() {
    let built = run(&["family", "build"], r#"{"n0_minus": 3, "d0": 4, "depth": 1}"#);
    assert_eq!(built.status.code(), Some(0));
    let mut fam = report(&built);

    let ok = run(&["family", "verify"], &fam.to_string());
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(report(&ok)["certificate"]["fail"], 0);

    // point d(0) at a fresh constant 2, below n_0^- = 3
    let exprs = fam["family"]["exprs"].as_array_mut().expect("exprs");
    exprs.push(json!("2"));
    let idx = exprs.len() - 1;
    fam["family"]["nodes"][""][0]["d"] = json!(idx);
    let bad = run(&["family", "verify"], &fam.to_string());
    assert_eq!(bad.status.code(), Some(1));
    let failing = report(&bad)["failing"].as_array().expect("failing").clone();
    assert!(failing.iter().any(|e| e["clause"] == "S1" && e["k"] == 0));
}

#[test]
fn early_reading_failure_reports_the_split() {
    // the value at level 0 depends on the member chosen at level 1
    let members = json!([[], [0], [1]]);
    let mut table = serde_json::Map::new();
    for i in 0..3 {
        for j in 0..3 {
            table.insert(format!("{i},{j}"), json!([j % 2, 0]));
        }
    }
    let input = json!({
        "oracle": {
            "base": {"c": [2, 2], "h": [1, 1], "d": [2, 2], "cells": [members, members]},
            "profile": [2, 2],
            "table": table,
        }
    });
    let timely = run(&["check-reading", "--mode", "timely"], &input.to_string());
    assert_eq!(timely.status.code(), Some(0));
    let early = run(&["check-reading", "--mode", "early"], &input.to_string());
    assert_eq!(early.status.code(), Some(1));
    assert_eq!(report(&early)["failing_split"], 1);
}

#[test]
fn usage_and_input_errors_exit_two() {
    assert_eq!(run(&["norm"], "not json").status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], "{}").status.code(), Some(2));
    assert_eq!(run(&["norm"], r#"{"creature": {"arena": 2, "cap": 1, "members": [[0, 1]]}}"#).status.code(), Some(2));
    assert_eq!(run(&["suite", "nonsense"], "").status.code(), Some(2));
    assert_eq!(run(&["schedule"], r#"{"n": 11}"#).status.code(), Some(2));
}

#[test]
fn suites_are_deterministic() {
    let a = run(&["suite", "tukey", "--seed", "9", "--cap", "40"], "");
    let b = run(&["suite", "tukey", "--seed", "9", "--cap", "40"], "");
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let rep = report(&a);
    assert_eq!(rep["suite"], "tukey");
    assert_eq!(rep["instances"], 40);
    assert_eq!(rep["failures"], json!([]));
}

#[test]
fn output_flag_writes_the_report() {
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("schedule.json");
    let out = run(&["schedule", "--output", path.to_str().expect("utf-8 path")], r#"{"n": 3}"#);
    assert_eq!(out.status.code(), Some(0));
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&path).expect("report written")).expect("JSON");
    assert_eq!(written["m"], json!([0, 3, 8, 15]));
}

#[test]
fn maps_report_transfer() {
    let input = json!({"c": [3, 4], "h": [1, 1], "x": [0, 2], "y": [0, 1]});
    let out = run(&["maps", "ed"], &input.to_string());
    assert_eq!(out.status.code(), Some(0));
    let rep = report(&out);
    assert_eq!(rep["transfer"], "Ok");
    assert_eq!(rep["f_image"]["cells"], json!([[0], [2]]));
    assert_eq!(rep["g_image"], json!([0, 1]));
}
