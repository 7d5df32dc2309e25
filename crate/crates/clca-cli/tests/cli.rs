//! End-to-end checks of the `clca` binary: exit codes and file outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clca")).args(args).output().expect("binary runs")
}

fn shipped_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/default.json")
        .to_string_lossy()
        .into_owned()
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("create temp dir");
    dir
}

#[test]
fn validate_accepts_the_shipped_config() {
    let out = run(&["validate", &shipped_config()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("config ok: 13 nodes, 32 links, 8 sessions"), "{text}");
    assert!(text.contains("theta_e"), "{text}");
}

#[test]
fn validate_rejects_malformed_config_with_exit_1() {
    let dir = temp_dir("cli_validate_bad");
    let bad = dir.join("bad.json");
    fs::write(&bad, "{}").unwrap();
    let out = run(&["validate", &bad.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn simulate_then_report_round_trips() {
    let dir = temp_dir("cli_simulate");
    let out_dir = dir.to_string_lossy().into_owned();
    let config = shipped_config();

    let out = run(&[
        "simulate",
        &config,
        "--v",
        "750",
        "--seed",
        "1",
        "--slots",
        "400",
        "--out-dir",
        &out_dir,
        "--strict-invariants",
        "--trace",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let summary = fs::read_to_string(dir.join("sweep_summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert!(lines.next().unwrap().starts_with("V,seed,algo,"));
    let row = lines.next().expect("one data row");
    assert!(row.starts_with("750,1,clca,"), "{row}");
    assert_eq!(lines.next(), None);

    let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("kind,t,node,session,"));
    // One row per (slot, node, session); solver rows only when links were active.
    let queue_rows = trace.lines().filter(|l| l.starts_with("queue,")).count();
    let solver_rows = trace.lines().filter(|l| l.starts_with("solver,")).count();
    assert_eq!(queue_rows, 400 * 13 * 8);
    assert!(solver_rows > 0 && solver_rows <= 400, "{solver_rows}");

    let report = run(&["report", &dir.join("sweep_summary.csv").to_string_lossy()]);
    // A single cell skips the trend verdicts but still checks violations.
    assert!(report.status.success(), "stderr: {}", String::from_utf8_lossy(&report.stderr));
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("verdicts:"), "{text}");
}

#[test]
fn report_rejects_a_csv_with_wrong_columns() {
    let dir = temp_dir("cli_report_bad");
    let path = dir.join("bogus.csv");
    fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
    let out = run(&["report", &path.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(1));
}
