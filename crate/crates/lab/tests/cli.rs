use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn shelab(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shelab"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.cfg");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("out/summary.json")).unwrap()).unwrap()
}

const SMALL_COUPLE: &str = "
grid.dx = 0.1
grid.half_width = 2
grid.horizon = 0.05
ensemble.paths = 3
couple.probes = 50
couple.condition_budget = 500
";

#[test]
fn unstable_ratio_is_rejected_with_exit_1() {
    let dir = TempDir::new().unwrap();
    let out = shelab(&["couple"], Some("grid.ratio = 0.6\n"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stability invariant"));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let out = shelab(&["couple"], Some("grid.dxx = 0.1\n"), dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn equal_initial_data_stay_equal() {
    let dir = TempDir::new().unwrap();
    let out = shelab(&["couple"], Some(SMALL_COUPLE), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    assert_eq!(s["constants"]["sup_abs_u"].as_f64(), Some(0.0));
    assert_eq!(s["status"], "pass");
    let csv = fs::read_to_string(dir.path().join("out/paths.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn seed_override_changes_probes_and_reruns_are_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let cfg = "grid.dx = 0.1\ngrid.half_width = 2\ngrid.horizon = 0.05\nensemble.paths = 4\ninitial.shape = zero\nsimulate.times = 0.025, 0.05\n";
    for d in [&a, &b] {
        assert_eq!(shelab(&["simulate", "--seed", "5", "--threads", "2"], Some(cfg), d.path()).status.code(), Some(0));
    }
    assert_eq!(shelab(&["simulate", "--seed", "6", "--threads", "2"], Some(cfg), c.path()).status.code(), Some(0));
    let read = |d: &TempDir| fs::read(d.path().join("out/probes.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn noise_dump_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = "grid.dx = 0.1\ngrid.half_width = 1\ngrid.horizon = 0.02\nensemble.paths = 2\nsimulate.times = 0.02\nsimulate.dump_noise = true\n";
    assert_eq!(shelab(&["simulate"], Some(cfg), dir.path()).status.code(), Some(0));
    let bytes = fs::read(dir.path().join("out/noise_path0.bin")).unwrap();
    let field = shelab::noise_io::decode(&bytes, 20240601, 0).unwrap();
    assert_eq!(shelab::noise_io::encode(&field), bytes);
}

#[test]
fn in_decay_chart_has_one_abscissa_per_level() {
    let dir = TempDir::new().unwrap();
    let cfg = "grid.half_width = 0.5\ngrid.horizon = 0.002\ndecay.t0 = 0.002\ndecay.k1 = 0.3\nensemble.paths = 2\ndecay.sub = 5\n";
    let out = shelab(&["in-decay"], Some(cfg), dir.path());
    assert!(matches!(out.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/in_decay.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let svg = fs::read_to_string(dir.path().join("out/in_decay.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 3);
}

#[test]
fn yw_check_writes_summary_and_passes() {
    let dir = TempDir::new().unwrap();
    let out = shelab(&["yw-check"], Some("yw.points = 400\n"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let s = summary(dir.path());
    assert_eq!(s["subcommand"], "yw-check");
    assert_eq!(s["assertions"].as_array().unwrap().len(), 6);
}
