//! End-to-end checks of the `dpsample` binary: exit codes, report shape,
//! and determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpsample"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&output.stdout)
        )
    })
}

#[test]
fn sample_known_cov_synthetic_exits_zero() {
    let out = run(&[
        "sample",
        "--task",
        "known-cov",
        "--gen-mean",
        "0,0",
        "--seed",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["outcome"]["kind"], "vector");
    assert_eq!(report["outcome"]["value"].as_array().unwrap().len(), 2);
    assert!(report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"].as_bool().unwrap()));
}

#[test]
fn bounded_cov_on_all_zero_csv_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("zeros.csv");
    // More rows than any practical derivation needs at d = 2.
    std::fs::write(&csv, "0.0,0.0\n".repeat(60_000)).unwrap();
    let out = run(&[
        "sample",
        "--task",
        "bounded-cov",
        "--data",
        csv.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["outcome"]["kind"], "bottom");
}

#[test]
fn malformed_csv_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "0,1\n0,2\n").unwrap();
    let out = run(&[
        "sample",
        "--task",
        "product",
        "--data",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn params_prints_derivations_without_running() {
    let out = run(&[
        "params",
        "--task",
        "bounded-cov",
        "--gen-mean",
        "0,0,0",
        "--kappa",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    let names: Vec<&str> = doc["derived_parameters"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"trunc_radius"));
    assert!(names.contains(&"test_sensitivity"));
}

#[test]
fn paper_profile_requires_constants() {
    let out = run(&[
        "params",
        "--task",
        "known-cov",
        "--gen-mean",
        "0,0",
        "--profile",
        "paper",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let with_constants = run(&[
        "params",
        "--task",
        "known-cov",
        "--gen-mean",
        "0,0",
        "--profile",
        "paper",
        "--constant-c",
        "0.1",
        "--constant-big-c",
        "2.0",
    ]);
    assert_eq!(with_constants.status.code(), Some(0));
}

#[test]
fn gen_then_sample_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bits.csv");
    let out = run(&[
        "gen",
        "--kind",
        "product",
        "--n",
        "120000",
        "--probs",
        "0.3,0.6",
        "--seed",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(Path::new(&csv).exists());
    let out = run(&[
        "sample",
        "--task",
        "product",
        "--alpha",
        "0.5",
        "--data",
        csv.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["outcome"]["kind"], "bits");
}

#[test]
fn reports_are_byte_identical_apart_from_wall_time() {
    let args = [
        "sample",
        "--task",
        "known-cov",
        "--gen-mean",
        "1,2",
        "--seed",
        "9",
    ];
    let strip = |out: &Output| {
        let mut v = stdout_json(out);
        v.as_object_mut().unwrap().remove("wall_time_ms");
        serde_json::to_string_pretty(&v).unwrap()
    };
    let a = run(&args);
    let b = run(&args);
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn audit_exit_codes_track_consistency() {
    let ok = run(&["audit", "--trials", "1500", "--d", "2", "--seed", "4"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let doc = stdout_json(&ok);
    assert_eq!(doc["all_consistent"], true);

    let leaky = run(&[
        "audit",
        "--trials",
        "1500",
        "--d",
        "2",
        "--seed",
        "4",
        "--include-leaky-mock",
    ]);
    assert_eq!(leaky.status.code(), Some(1));
    let doc = stdout_json(&leaky);
    assert_eq!(doc["all_consistent"], false);
}
