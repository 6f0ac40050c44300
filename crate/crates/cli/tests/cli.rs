use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spreadout"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_dir(out: &Path, prefix: &str) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    assert_eq!(dirs.len(), 1, "expected one {prefix} run in {}", out.display());
    dirs.pop().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn kernel_variance_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["kernel", "--d", "3", "--profile", "uniform", "--L", "8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&run_dir(tmp.path(), "kernel-").join("report.json"));
    let k = &rep["kernels"][0];
    assert!((k["sigma2"].as_f64().unwrap() - 72.0).abs() < 1e-10);
    assert!((k["normalization"].as_f64().unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn kernel_rejects_zero_range() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["kernel", "--d", "3", "--L", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("L must be at least 1"));
}

#[test]
fn tent_kernel_is_normalized() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["kernel", "--d", "5", "--profile", "tent", "--L", "4"]);
    assert!(o.status.success());
    let dir = run_dir(tmp.path(), "kernel-");
    let csv = std::fs::read_to_string(dir.join("kernel.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!((row[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-14);
    assert!(dir.join("cache/product-tent-d5-L4.v1.bin").exists());
}

#[test]
fn nearest_neighbour_green_tail() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["green", "--d", "3", "--mu", "1", "--nn", "--points", "axis:1..30"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(run_dir(tmp.path(), "green-").join("green.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,x3,value,est_error,abs_x,scaled");
    let scaled: Vec<f64> = lines.map(|l| l.split(',').last().unwrap().parse().unwrap()).collect();
    assert_eq!(scaled.len(), 30);
    let target = 3.0 / (2.0 * std::f64::consts::PI);
    assert!((scaled[29] - target).abs() < (scaled[9] - target).abs());
    assert!((scaled[29] / target - 1.0).abs() < 1e-3);
}

#[test]
fn scalar_deconvolution() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["deconv", "--beta0", "0.1", "--beta1", "0", "--zeta", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&run_dir(tmp.path(), "deconv-").join("report.json"));
    assert!((rep["phi0"].as_f64().unwrap() + 1.0 / 9.0).abs() < 1e-10);
    assert_eq!(rep["l1_fallback"], Value::Bool(true));
}

#[test]
fn contractive_deconvolution_uses_weighted_norm() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["deconv", "--beta0", "0.02", "--beta1", "0.001", "--zeta", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&run_dir(tmp.path(), "deconv-").join("report.json"));
    assert_eq!(rep["l1_fallback"], Value::Bool(false));
    assert!(rep["certificate"]["contraction"].as_f64().unwrap() < 1.0);
    assert!(rep["reduction_residual"].as_f64().unwrap() < 1e-8);
    assert!(rep["tail_estimate"].is_object());
}

#[test]
fn corrupted_config_exits_before_work() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, "{\"d\": 3,").unwrap();
    let out = tmp.path().join("runs");
    let o = run(&out, &["--config", cfg.to_str().unwrap(), "verify-all"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    std::fs::write(&cfg, "{\"dimension\": 3}").unwrap();
    assert_eq!(run(&out, &["--config", cfg.to_str().unwrap(), "kernel"]).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"d": 2, "l": [3], "profile": "tent"}"#).unwrap();
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "kernel", "--L", "5"]);
    assert!(o.status.success());
    let meta = json(&run_dir(tmp.path(), "kernel-").join("meta.json"));
    assert_eq!(meta["config"]["d"], 2);
    assert_eq!(meta["config"]["l"][0], 5);
    assert_eq!(meta["config"]["profile"], "tent");
}

#[test]
fn runs_are_reproducible_and_regenerable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["decomp", "--d", "5", "--L", "2", "--beta", "0.01", "--points", "axis:2..8"];
    assert!(run(a.path(), &args).status.success());
    assert!(run(b.path(), &args).status.success());
    let da = run_dir(a.path(), "decomp-");
    let db = run_dir(b.path(), "decomp-");
    assert_eq!(da.file_name(), db.file_name());
    for f in ["remainder.csv", "e.csv", "report.json"] {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap(), "{f} differs");
    }
    let meta = json(&da.join("meta.json"));
    assert_eq!(meta["subcommand"], "decomp");
    assert!(meta["timestamp_unix"].is_u64());

    let c = tempfile::tempdir().unwrap();
    let o = run(c.path(), &["--config", da.join("meta.json").to_str().unwrap(), "decomp"]);
    assert!(o.status.success());
    let dc = run_dir(c.path(), "decomp-");
    assert_eq!(dc.file_name(), da.file_name());
    assert_eq!(std::fs::read(dc.join("remainder.csv")).unwrap(), std::fs::read(da.join("remainder.csv")).unwrap());
}

#[test]
fn small_bootstrap_scan() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["--threads", "1", "bootstrap", "--d", "5", "--L", "2", "--beta", "0.02", "--zgrid", "1:zc:4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(tmp.path(), "bootstrap-");
    let csv = std::fs::read_to_string(dir.join("bootstrap.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "z,b,branch,argmax_x");
    assert_eq!(csv.lines().count(), 5);
    let rep = json(&dir.join("report.json"));
    assert_eq!(rep["scan"]["forbidden_violations"].as_array().unwrap().len(), 0);
}

#[test]
fn verify_all_reports_and_validates_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["verify-all", "--fast", "--only", "4,13"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("criterion")).count(), 2);
    assert!(stdout.contains("[fast]"));
    assert_eq!(run(tmp.path(), &["verify-all", "--only", "0"]).status.code(), Some(2));
}
