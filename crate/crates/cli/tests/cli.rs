use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use grayhole_core::sweep::CSV_HEADER;

/// Short, small scenario so each invocation finishes quickly.
const SMALL: &str = "\
# a few nodes, two gray holes
node_count = 20
area_width = 800
area_height = 400
flows = 5
duration = 60
malicious_count = 2
seed = 3
";

fn grayhole(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grayhole"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.conf");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn value(stdout: &[u8], key: &str) -> String {
    let text = String::from_utf8_lossy(stdout);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_owned()
}

#[test]
fn run_writes_trace_that_metrics_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let r = grayhole(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["trace.txt", "metrics.txt", "config.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert_eq!(fs::read(out.join("metrics.txt")).unwrap(), r.stdout);

    let trace = out.join("trace.txt");
    let m = grayhole(&["metrics", "--trace", trace.to_str().unwrap()]);
    assert!(m.status.success());
    assert_eq!(m.stdout, r.stdout);
    assert_eq!(
        value(&r.stdout, "ground_truth_malicious")
            .split(',')
            .count(),
        2
    );
}

#[test]
fn seed_flag_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let a = grayhole(&["run", "--config", &cfg, "--seed", "3"]);
    let b = grayhole(&["run", "--config", &cfg]);
    let c = grayhole(&["run", "--config", &cfg, "--seed", "4"]);
    assert!(a.status.success() && b.status.success() && c.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn sweep_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let r = grayhole(&[
        "sweep",
        "--axis",
        "mobility",
        "--values",
        "0,10",
        "--repeats",
        "2",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 5);
    let keys: Vec<(String, String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), CSV_HEADER.split(',').count());
            assert!(!f[7].is_empty(), "baseline column filled");
            (f[0].to_owned(), f[1].to_owned(), f[2].to_owned())
        })
        .collect();
    let want: Vec<(String, String, String)> = [
        ("0", "0", "3"),
        ("0", "1", "4"),
        ("10", "0", "3"),
        ("10", "1", "4"),
    ]
    .iter()
    .map(|&(a, b, c)| (a.into(), b.into(), c.into()))
    .collect();
    assert_eq!(keys, want);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = config(dir.path(), "node_count = 20\nwarp_speed = 9\nk = zero\n");
    let r = grayhole(&["run", "--config", &bad]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 2") && err.contains("line 3"), "{err}");

    let missing = dir.path().join("nope.conf");
    assert_eq!(
        grayhole(&["run", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        grayhole(&["sweep", "--axis", "sideways"]).status.code(),
        Some(1)
    );

    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("s");
    let r = grayhole(&[
        "sweep",
        "--axis",
        "malicious",
        "--values",
        "50",
        "--repeats",
        "1",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        r.status.code(),
        Some(1),
        "a sweep value that breaks the config"
    );
}

#[test]
fn truncated_trace_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("run");
    assert!(
        grayhole(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let text = fs::read_to_string(out.join("trace.txt")).unwrap();
    let cut: String = text
        .lines()
        .take(text.lines().count() / 2)
        .map(|l| format!("{l}\n"))
        .collect();
    let p = dir.path().join("cut.txt");
    fs::write(&p, cut).unwrap();
    let r = grayhole(&["metrics", "--trace", p.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("truncated"));
}

#[test]
fn help_exits_cleanly() {
    let r = grayhole(&["--help"]);
    assert_eq!(r.status.code(), Some(0));
    for sub in ["run", "sweep", "metrics"] {
        assert!(String::from_utf8_lossy(&r.stdout).contains(sub));
    }
}
