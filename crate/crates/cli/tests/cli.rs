//! The `weylsim` binary: subcommands, artifacts and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn weylsim(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weylsim"))
        .args(args)
        .env("WEYLSIM_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const CONFIG: &str = r#"{"family": "A", "N": 3, "preset": "dyson", "k": 0.2, "T": 1.0,
                         "ensemble": 16, "seed": 5, "policy": {"dt_max": 0.001}}"#;

#[test]
fn simulate_then_reanalyze() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = weylsim(&["simulate", &cfg], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["completed"], 16);
    // no output_dir in the config: the run lands under the output root
    let run_dir = tmp.path().join("dyson-A3-seed5");
    assert!(run_dir.join("manifest.json").is_file());

    let re = weylsim(&["dimension", run_dir.to_str().unwrap(), "--eps", "0.01"], tmp.path());
    assert!(re.status.success());
    let re: Value = serde_json::from_slice(&re.stdout).unwrap();
    assert_eq!(re["eps"], 0.01);

    let bad = weylsim(&["dimension", run_dir.to_str().unwrap(), "--eps", "0.5"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = weylsim(&["simulate", "/nonexistent/run.json"], tmp.path());
    assert_eq!(missing.status.code(), Some(1));

    let cfg = write_config(tmp.path(), r#"{"family": "A", "N": 3, "preset": "dyson", "k": 0.2, "T": 1.0, "ensemble": 4}"#);
    let invalid = weylsim(&["simulate", &cfg], tmp.path());
    assert_eq!(invalid.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("seed"));

    let garbled = write_config(tmp.path(), "{ not json");
    assert_eq!(weylsim(&["simulate", &garbled], tmp.path()).status.code(), Some(2));

    let no_grid = write_config(tmp.path(), CONFIG);
    assert_eq!(weylsim(&["sweep", &no_grid], tmp.path()).status.code(), Some(2));

    assert_eq!(weylsim(&["frobnicate"], tmp.path()).status.code(), Some(2));
}

#[test]
fn sweep_prints_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"family": "A", "N": 3, "preset": "dyson", "T": 0.5, "ensemble": 6, "seed": 2,
            "policy": {"dt_max": 0.001}, "sweep": {"k": [0.1, 0.6]}}"#,
    );
    let out = weylsim(&["sweep", &cfg, "--out", tmp.path().join("sw").to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().next().unwrap().starts_with("point"));
}

#[test]
fn verify_algebra_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("verify.json");
    let out = weylsim(
        &["verify", "--scope", "algebra", "--algebra-inputs", "5", "--report", report.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(rep["passed"], true);
    assert!(!rep["checks"].as_array().unwrap().is_empty());
}

#[test]
fn besq_oracle_query() {
    let tmp = tempfile::tempdir().unwrap();
    let out = weylsim(&["besq", "--delta", "1", "--x0", "1", "--t", "1", "--samples", "3"], tmp.path());
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    // P(|B| from 1 hits 0 by 1) = 2 P(Z > 1)
    assert!((v["hit_probability"].as_f64().unwrap() - 0.317_310_507_862_914).abs() < 1e-9);
    assert_eq!(v["zero_set_dimension"], 0.5);
    assert_eq!(v["samples"].as_array().unwrap().len(), 3);

    let bad = weylsim(&["besq", "--delta", "-1", "--x0", "1", "--t", "1"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
}
