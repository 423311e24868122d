//! Exit codes and files of the `wncs` binary.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
version = 1
name = "small"
loops = 2
steps = 300
burn_in = 100

[policy]
kind = "zw-et"
lambda = 2.0
"#;

fn wncs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wncs")).args(args).output().unwrap()
}

fn scenario_file(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_results_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_file(dir.path(), SMALL);
    let out = dir.path().join("out");
    let trace = dir.path().join("trace.ndjson");
    let o = wncs(&[
        "run",
        "--scenario",
        &scenario,
        "--seeds",
        "0..3",
        "--out",
        out.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["summary.csv", "runs.csv", "series.ndjson"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let runs = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 3 * 2);
    assert!(std::fs::read_to_string(trace).unwrap().lines().count() > 0);
}

#[test]
fn sweep_and_compare_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_file(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let o = wncs(&[
        "sweep",
        "--scenario",
        &scenario,
        "--seeds",
        "1,2",
        "--out",
        out.to_str().unwrap(),
        "--param",
        "threshold",
        "--values",
        "1,3",
        "--adaptive",
        "--sequential",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("ta,")));

    let out = dir.path().join("loops");
    let o = wncs(&[
        "sweep",
        "--scenario",
        &scenario,
        "--seeds",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--param",
        "loops",
        "--values",
        "1,3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let out = dir.path().join("compare");
    let o = wncs(&[
        "compare",
        "--scenario",
        &scenario,
        "--seeds",
        "4",
        "--out",
        out.to_str().unwrap(),
        "--policies",
        "udp,zw",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("udp,")));
    assert!(summary.lines().any(|l| l.starts_with("zw,")));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let good = scenario_file(dir.path(), SMALL);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let missing = dir.path().join("missing.toml");
    assert_eq!(wncs(&["run", "--scenario", missing.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    assert_eq!(wncs(&["run", "--scenario", &good, "--seeds", "5..2", "--out", out]).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = 1\nloops = 0\n").unwrap();
    assert_eq!(wncs(&["run", "--scenario", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    let udp = dir.path().join("udp.toml");
    std::fs::write(&udp, "version = 1\nloops = 1\nsteps = 300\nburn_in = 100\n[policy]\nkind = \"udp\"\n").unwrap();
    let o =
        wncs(&["sweep", "--scenario", udp.to_str().unwrap(), "--param", "threshold", "--values", "1", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    // Unknown flags are rejected by the argument parser.
    assert_ne!(wncs(&["run", "--bogus"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_file(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let o = wncs(&["run", "--scenario", &scenario, "--seeds", "0", "--out", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}
