use std::path::Path;
use std::process::{Command, Output};

use pdflow_cli::output::CSV_HEADER;

const CANONICAL: &str = "[problem]\nhessian = [[2.0]]\na = [[-1.0]]\nb = [-1.0]\n";

fn pdflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdflow"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("PDFLOW_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn check_reports_canonical_rho() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CANONICAL);
    let out = pdflow(&["check", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&tmp.path().join("out/check.json"));
    assert_eq!(report["rho"], 1.75);
    assert_eq!(report["passed"], true);
}

#[test]
fn rank_deficient_constraints_fail_the_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[problem]\nhessian = [[2.0, 0.0], [0.0, 2.0]]\na = [[1.0, 1.0], [2.0, 2.0]]\nb = [1.0, 2.0]\n",
    );
    let out = pdflow(&["check", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let report = json(&tmp.path().join("out/check.json"));
    assert_eq!(report["passed"], false);
    assert_eq!(report["audit"]["full_row_rank"], false);
}

#[test]
fn small_k_multiplier_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CANONICAL);
    let out = pdflow(&["check", "--config", &cfg, "--k-mult", "0.5"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{CANONICAL}\n[solver]\nstpe = 0.1\n"));
    let out = pdflow(&["solve", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stpe"));
}

#[test]
fn solve_writes_the_csv_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{CANONICAL}\n[solver]\nstep = 0.01\ntol = 1e-10\n"));
    let out = pdflow(&["solve", "--config", &cfg, "--full-state", "--variant", "euclidean"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("out/solve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), format!("{CSV_HEADER},x_0,lambda_0"));
    for line in lines {
        let lambda: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(lambda >= 0.0);
    }
    let summary = json(&tmp.path().join("out/solve.json"));
    assert_eq!(summary["converged"], true);
    assert!(summary["rho"].is_null());

    let rate = Command::new(env!("CARGO_BIN_EXE_pdflow"))
        .arg("rate")
        .arg(tmp.path().join("out/solve.csv"))
        .output()
        .unwrap();
    assert_eq!(rate.status.code(), Some(0));
    let fit: serde_json::Value = serde_json::from_slice(&rate.stdout).unwrap();
    assert!(fit["fitted_rate"].as_f64().unwrap() > 0.0);
}

#[test]
fn oversized_steps_diverge() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{CANONICAL}\n[solver]\nalpha = 1000.0\nstep = 1.0\n"));
    let out = pdflow(&["solve", "--config", &cfg, "--variant", "euclidean"], tmp.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn single_multiplier_sweep_skips_the_ordering_claim() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep = [10.0]\n");
    let out = pdflow(&["example1", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&tmp.path().join("out/example1.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 1);
    assert!(report["milestones_strictly_decreasing"].is_null());
    assert!(tmp.path().join("out/example1_k10.0.csv").exists());
}

#[test]
fn sweep_divergence_names_the_multiplier() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep = [1.01, 10.0]\n[solver]\nstep = 0.5\nbeta = 2.0\n");
    let out = pdflow(&["example1", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("k multiplier 1.01"), "{stderr}");
}

#[test]
fn invalid_thread_cap_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pdflow"))
        .args(["example1", "--max-iter", "10", "--out"])
        .arg(tmp.path())
        .env("PDFLOW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
