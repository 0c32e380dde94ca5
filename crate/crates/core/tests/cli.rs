//! End-to-end checks of the `zasgd` binary.

use std::path::Path;
use std::process::{Command, Output};

fn zasgd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zasgd")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn train_writes_csv_sidecar_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = zasgd(dir.path(), &["train", "-L", "4", "-d", "2", "--out", "run.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert!(csv.starts_with("iter,loss,grad_norm_1,"));
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["depth"], 4);
    assert!(meta["config"]["version"].as_str().unwrap().starts_with("zasgd "));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["records"][0]["status"], "converged");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.json", "b.json"] {
        let o = zasgd(dir.path(), &["train", "-L", "3", "-d", "3", "--target", "gaussian", "--seed", "5", "--format", "json", "--out", out]);
        assert_eq!(code(&o), 0);
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    let doc: serde_json::Value = serde_json::from_slice(&read("a.json")).unwrap();
    assert!(doc["config"].is_object() && doc["records"].is_array());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&zasgd(dir.path(), &["train", "--lr", "fast"])), 2);
    assert_eq!(code(&zasgd(dir.path(), &["train", "--no-such-flag"])), 2);
    assert_eq!(code(&zasgd(dir.path(), &["nope"])), 2);
    assert_eq!(code(&zasgd(dir.path(), &["sweep-depth", "--depths", "8,4"])), 2);
    assert_eq!(code(&zasgd(dir.path(), &["train", "--target", "custom:missing.csv"])), 1);
    std::fs::write(dir.path().join("bad.toml"), "depth = 3\ncolour = 1\n").unwrap();
    let o = zasgd(dir.path(), &["train", "--config", "bad.toml"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn config_file_fills_unset_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "depth = 3\ndim = 2\nlr = 0.05\nout = \"c.csv\"\n").unwrap();
    let o = zasgd(dir.path(), &["train", "--config", "c.toml", "-L", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("c.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["depth"], 5);
    assert_eq!(meta["config"]["dim"], 2);
    assert_eq!(meta["config"]["eta"], 0.05);
}

#[test]
fn check_reports_violations_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let clean = zasgd(dir.path(), &["check", "-L", "3", "-d", "2", "--max-iters", "200", "--out", "ok.csv"]);
    assert_eq!(code(&clean), 0, "{}", String::from_utf8_lossy(&clean.stdout));
    // a near-identity start breaks the approximate-invariance conditions
    let bad = zasgd(dir.path(), &["check", "-L", "3", "-d", "2", "--init", "near-identity:0.5", "--max-iters", "5", "--out", "bad.csv"]);
    assert_eq!(code(&bad), 1);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bad.report.json")).unwrap()).unwrap();
    assert!(report["monitor"]["first_violation"].is_string());
}

#[test]
fn diverging_run_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = zasgd(dir.path(), &["train", "-L", "4", "-d", "2", "--lr", "50", "--max-iters", "100"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("diverged"));
}

#[test]
fn remaining_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 5] = [
        &["sweep-depth", "--depths", "2,4,8", "-d", "2"],
        &["compare-init", "-L", "3", "-d", "3", "--seeds", "0,1", "--max-iters", "5000"],
        &["flow", "-L", "2", "-d", "2", "--horizon", "0.5", "--step", "0.01"],
        &["toy", "--start=1,0", "--lr", "0.1", "--max-iters", "100"],
        &["resnet", "-L", "3", "--epochs", "3", "--samples", "40", "--lr", "0.1"],
    ];
    for args in runs {
        let o = zasgd(dir.path(), args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["sweep.csv", "compare.csv", "compare.curves.csv", "flow.csv", "toy.csv", "resnet.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}
