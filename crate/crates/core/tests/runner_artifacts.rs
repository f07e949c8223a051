//! End-to-end runs through the config/manifest layer.

use serde_json::{json, Value};
use weylsim_core::runner::{load_config, parse_config, reanalyze_dimension, run_simulate, run_sweep};
use weylsim_core::RunError;

fn small() -> Value {
    json!({
        "family": "A", "N": 3, "preset": "dyson", "k": 0.2, "T": 1.0, "ensemble": 24, "seed": 99,
        "policy": {"dt_max": 1e-3}, "trajectories": {"count": 3, "stride": 10}
    })
}

#[test]
fn simulate_writes_all_artifacts() {
    let raw = small();
    let cfg = parse_config(&raw).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = run_simulate(&cfg, &raw, tmp.path()).unwrap();
    for f in ["events.json", "dimension.json", "summary.json", "manifest.json"] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }
    let csvs = std::fs::read_dir(tmp.path().join("trajectories")).unwrap().count();
    assert_eq!(csvs, 3);

    let summary: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["completed"], 24);
    assert_eq!(summary["k"], 0.2);
    assert_eq!(out.manifest.trajectory_seeds.len(), 24);
    assert_eq!(out.events.trajectories.len(), 24);

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"], raw);
    assert!(manifest["resolved"]["eps_grid"].is_array());
}

#[test]
fn reanalysis_reproduces_the_stored_estimate() {
    let raw = small();
    let cfg = parse_config(&raw).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = run_simulate(&cfg, &raw, tmp.path()).unwrap();
    let re = reanalyze_dimension(tmp.path(), None, None).unwrap();
    assert_eq!(re.estimate, out.dimension.estimate);
    assert_eq!(re.available_eps, vec![1e-2, 1e-3, 1e-4]);
    // another eps of the grid works, one outside it does not
    assert!(reanalyze_dimension(tmp.path(), Some(1e-2), None).is_ok());
    assert!(matches!(reanalyze_dimension(tmp.path(), Some(5e-3), None), Err(RunError::Invalid(_))));
}

#[test]
fn manifest_reruns_identically() {
    let raw = small();
    let cfg = parse_config(&raw).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    run_simulate(&cfg, &raw, &tmp.path().join("a")).unwrap();
    let (again, raw2) = load_config(&tmp.path().join("a/manifest.json")).unwrap();
    assert_eq!(raw2, raw);
    run_simulate(&again, &raw2, &tmp.path().join("b")).unwrap();
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("summary.json")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn invalid_configs_report_every_problem() {
    let raw = json!({"family": "A", "N": 3, "preset": "dyson", "k": 0.2, "k2": 1.0, "T": 1.0, "ensemble": 4, "colour": "red"});
    let Err(RunError::Invalid(problems)) = parse_config(&raw) else {
        panic!("config should be rejected");
    };
    let text = problems.join("\n");
    assert!(text.contains("seed"), "{text}");
    assert!(text.contains("colour"), "{text}");
    assert!(text.contains("k2"), "{text}");
    assert_eq!(RunError::Invalid(problems).exit_code(), 2);
}

#[test]
fn sweep_covers_the_grid() {
    let mut raw = small();
    raw["ensemble"] = json!(8);
    raw["sweep"] = json!({"k": [0.1, 0.3]});
    raw.as_object_mut().unwrap().remove("trajectories");
    let cfg = parse_config(&raw).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let table = run_sweep(&cfg, &raw, tmp.path()).unwrap();
    assert_eq!(table.rows.len(), 2);
    raw["sweep"] = json!({"T": [0.5]});
    assert!(parse_config(&raw).is_err(), "only preset parameters can be swept");
    assert_eq!(table.rows[0].params["k"], 0.1);
    assert_eq!(table.rows[1].params["k"], 0.3);
    assert_ne!(table.rows[0].seed, table.rows[1].seed);
    let csv = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(tmp.path().join("sweep.json").is_file());
}

fn repo_file(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn shipped_configs_parse() {
    for name in ["configs/dyson_a3.json", "configs/bessel_b2_sweep.json"] {
        let (cfg, _) = load_config(&repo_file(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.points().is_ok());
    }
}

#[test]
fn schema_lists_every_accepted_key() {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(repo_file("schema/run-config.v1.json")).unwrap()).unwrap();
    let props = schema["properties"].as_object().unwrap();
    // a config using every top-level key must parse, and each key must be in the schema
    let raw = json!({
        "schema": "weylsim.run-config.v1", "name": "all", "family": "A", "N": 3, "preset": "dyson", "k": 0.3,
        "T": 1.0, "ensemble": 2, "seed": 1, "x0": "equispaced", "policy": {"dt_max": 1e-3},
        "eps_grid": [1e-2], "dim_eps": 1e-2, "scale_window": {"min_level": 2, "max_level": 6},
        "count_levels": 10, "weights": "uniform", "output_dir": "x", "workers": 1,
        "trajectories": {"count": 1, "stride": 1}, "keep_events": 1, "predictor_grid": 8, "sweep": {"k": [0.3]}
    });
    parse_config(&raw).unwrap();
    for key in raw.as_object().unwrap().keys() {
        assert!(props.contains_key(key), "{key} missing from the schema");
    }
    for key in props.keys() {
        let mut probe = raw.clone();
        probe[key.as_str()] = json!(true);
        if !["k", "k1", "k2", "kappa", "a", "p", "q", "name"].contains(&key.as_str()) {
            assert!(parse_config(&probe).is_err(), "{key} accepts anything");
        }
    }
}
