use std::path::Path;
use std::process::{Command, Output};

use kmfg::cli_io::Checkpoint;

fn kmfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmfg")).args(args).output().expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SMALL: &str = r#"{"grid": {"n_x": 16, "n_v": 16, "n_t": 20}}"#;

#[test]
fn solve_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    write(&manifest, SMALL);
    let out = dir.path().join("run");
    let o = kmfg(&["solve", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "manifest.json",
        "summary.json",
        "m_final.kmfg",
        "u_final.kmfg",
        "m_final_terminal.csv",
        "residuals_final.csv",
        "diagnostics_final/summary.json",
        "diagnostics_final/mass.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let ckpt = Checkpoint::read(&out.join("m_final.kmfg")).unwrap();
    assert_eq!(ckpt.levels.len(), 21);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    write(&manifest, SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = kmfg(&["solve", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["m_final.kmfg", "u_final.kmfg", "m_final_terminal.csv", "diagnostics_final/entropy.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let o = kmfg(&["compare", a.join("m_final.kmfg").to_str().unwrap(), b.join("m_final.kmfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["sup_l1"], 0.0);
    assert_eq!(report["sup_linf"], 0.0);
}

#[test]
fn manifest_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    write(&manifest, r#"{"grid": {"n_x": 3}}"#);
    let o = kmfg(&["solve", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["reason"], "manifest");
    assert!(err["message"].as_str().unwrap().contains("/grid/n_x"));
}

#[test]
fn missing_files_exit_three() {
    let o = kmfg(&["solve", "/nonexistent/manifest.json"]);
    assert_eq!(o.status.code(), Some(3));
    let o = kmfg(&["compare", "/nonexistent/a", "/nonexistent/b"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn oracle_then_diagnose_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.kmfg");
    let b = dir.path().join("b.kmfg");
    let csv = dir.path().join("a.csv");
    let o = kmfg(&["oracle", "kolmogorov", "--t", "0.5", "--out", a.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 64 * 64 + 1);
    assert!(rows.starts_with("x0,v0,value"));

    let o = kmfg(&["oracle", "kolmogorov", "--t", "0.5", "--n-x", "32", "--out", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = kmfg(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["reason"], "grid_mismatch");

    // A single stored level is not a time series.
    let o = kmfg(&["diagnose", a.to_str().unwrap(), "--suite", "all"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn diagnose_a_solved_density() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    write(&manifest, SMALL);
    let out = dir.path().join("run");
    assert_eq!(kmfg(&["solve", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let diag = dir.path().join("diag");
    let o = kmfg(&[
        "diagnose",
        out.join("m_final.kmfg").to_str().unwrap(),
        "--suite",
        "all",
        "--horizon",
        "1.0",
        "--out",
        diag.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["name"] == "mass" && c["passed"] == true));
    assert!(diag.join("summary.json").exists());
}
