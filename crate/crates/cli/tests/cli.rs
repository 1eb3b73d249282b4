use std::path::Path;
use std::process::{Command, Output};

fn mra(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mra"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn scenario_file(dir: &Path, mmts: usize, seed: u64) -> String {
    let path = dir.join(format!("s{mmts}_{seed}.json"));
    let p = path.to_str().unwrap().to_string();
    let out = mra(&["scenario", "--mmts", &mmts.to_string(), "--seed", &seed.to_string(), "--out", &p], dir);
    assert!(out.status.success());
    p
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mra(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(mra(&["--version"], dir.path()).status.code(), Some(0));
    assert_eq!(mra(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(mra(&["solve"], dir.path()).status.code(), Some(1));
    assert_eq!(mra(&["solve", "x.json", "--method", "secant"], dir.path()).status.code(), Some(1));
}

#[test]
fn bad_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = mra(&["solve", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let s = scenario_file(dir.path(), 3, 1);
    std::fs::write(dir.path().join("bad.json"), r#"{"step_size": -1.0}"#).unwrap();
    let out = mra(&["solve", &s, "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step_size"));
}

#[test]
fn solve_writes_requested_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario_file(dir.path(), 5, 1);
    let out = mra(
        &[
            "solve", &s, "--method", "modified_newton", "--out", "r.json", "--dump-kkt", "k.json", "--dump-traces",
            "t.json", "--price-trace", "p.csv", "--strict",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("converged    true"));
    assert!(stdout.contains("modified_newton"));

    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert!(r["capacity_bps_per_hz"].as_f64().unwrap() > 0.0);
    let k: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("k.json")).unwrap()).unwrap();
    assert!(k["residual_norm"].as_f64().unwrap() <= 1e-5);
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert!(!t.as_array().unwrap().is_empty());
    let p = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(p.starts_with("iter,lambda_1,lambda_2,mu_1,"));
}

#[test]
fn strict_flags_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario_file(dir.path(), 5, 1);
    std::fs::write(dir.path().join("short.json"), r#"{"max_outer_iters": 2}"#).unwrap();
    assert_eq!(mra(&["solve", &s, "--config", "short.json"], dir.path()).status.code(), Some(0));
    assert_eq!(mra(&["solve", &s, "--config", "short.json", "--strict"], dir.path()).status.code(), Some(2));
}

#[test]
fn sweep_is_deterministic_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), r#"{"mmt_counts": [5, 10], "seeds": [1, 2]}"#).unwrap();
    let a = mra(&["sweep", "spec.json", "--out", "a.csv"], dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = mra(&["sweep", "spec.json", "--out", "b.csv", "--jobs", "2", "--strict"], dir.path());
    assert_eq!(b.status.code(), Some(0));
    let csv_a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let csv_b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert!(csv_a.starts_with("L,seed,mode,method,capacity_bps_per_hz,iterations,converged,wall_ms\n"));
    assert_eq!(csv_a.lines().count(), 1 + 2 * 2 * 2 * 2);
    assert!(dir.path().join("a.csv.meta.json").exists());
}

#[test]
fn sweep_filters_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), r#"{"mmt_counts": [5]}"#).unwrap();
    let out = mra(
        &["sweep", "spec.json", "--seed", "3", "--method", "newton", "--mode", "switched", "--timing", "--out", "t.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[..4], ["5", "3", "switched", "newton"]);
    assert!(row[7].parse::<f64>().unwrap() >= 0.0);
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn oracle_and_diagnose_run() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario_file(dir.path(), 2, 1);
    let out = mra(&["oracle", &s, "--points", "20", "--out", "o.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("o.json").exists());

    let out = mra(&["diagnose", "--problems", "4", "--out", "d.json"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("newton order >= 1.7 on"));
    let d: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    assert_eq!(d["newton"].as_array().unwrap().len(), 4);
}
