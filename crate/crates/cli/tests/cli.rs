use std::process::{Command, Output};

fn scqaoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scqaoa")).args(args).output().unwrap()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

#[test]
fn spectrum_prints_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = scqaoa(&["spectrum", "--size", "2", "--states", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rows = json(&out.stdout);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!((rows[0]["energy"].as_f64().unwrap() + 5f64.sqrt()).abs() < 1e-12);
    assert!(dir.path().join("spectrum.csv").is_file());
}

#[test]
fn prepare_converges_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = scqaoa(&["prepare", "--size", "4", "--layers", "2", "--sector", "-1", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&out.stdout);
    assert_eq!(s["converged"], true);
    assert_eq!(s["sector"], -1);
    assert!(s["fidelity"].as_f64().unwrap() >= 0.99);
}

#[test]
fn unconverged_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = scqaoa(&["prepare", "--size", "6", "--layers", "1", "--max-iters", "2", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stdout)["status"], "max_iters");
}

#[test]
fn config_errors_are_json_on_stderr() {
    let out = scqaoa(&["prepare", "--cutoff", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let e = json(&out.stderr);
    assert_eq!(e["error"], "Config");
    assert_eq!(e["exit_code"], 1);
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(scqaoa(&["prepare", "--model", "potts"]).status.code(), Some(1));
    assert_eq!(scqaoa(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(scqaoa(&["--help"]).status.code(), Some(0));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"size": 4, "layers": 1, "spectrum_states": 1}"#).unwrap();
    let d = dir.path().join("o");
    let out = scqaoa(&["spectrum", "--config", cfg.to_str().unwrap(), "--states", "3", "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out.stdout).as_array().unwrap().len(), 6);
}
