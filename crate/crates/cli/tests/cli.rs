use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opinion-sim"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--counterfactual", "--horizon", "40", "--config"])
        .arg(config("reference.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.csv", "events.csv", "weights.csv", "metrics.txt", "metrics.csv", "bounds.csv", "baseline_trace.csv"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 40 * 10);
    assert!(stdout(&out).contains("ESC"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = bin()
            .args(["run", "--horizon", "30", "--seed", "9", "--fusion", "averaging", "--config"])
            .arg(config("reference.json"))
            .arg("--out")
            .arg(dir.path().join(name))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let read = |n: &str| std::fs::read(dir.path().join(n).join("trace.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn sweep_tabulates_each_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--schedules", "tv,period3,0.15", "--config"])
        .arg(config("toy.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["tv", "period3", "0.15"]);
}

#[test]
fn toy_bounds_check_passes() {
    let out = bin().args(["bounds-check", "--trials", "200", "--config"]).arg(config("toy.json")).output().unwrap();
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("random spectral: 200/200 hold"));
}

#[test]
fn riccati_reports_condition() {
    let out = bin().args(["riccati", "--agent", "2", "--config"]).arg(config("reference.json")).output().unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("condition holds"));
}

#[test]
fn errors_exit_nonzero() {
    let out = bin().args(["riccati", "--agent", "11", "--config"]).arg(config("reference.json")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown agent 11"));

    let dir = tempfile::tempdir().unwrap();
    let bad = bin()
        .args(["run", "--schedule", "fast", "--config"])
        .arg(config("reference.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!bad.status.success());

    let missing = bin().args(["riccati", "--agent", "1", "--config", "/nonexistent.json"]).output().unwrap();
    assert!(!missing.status.success());
}
