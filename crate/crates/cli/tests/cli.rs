use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qghaar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qghaar")).args(args).env("QGHAAR_THREADS", "2").output().expect("spawn qghaar")
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("model.cfg");
    std::fs::write(&p, body).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).expect("valid JSON report")
}

fn strip_runtime(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("runtime_ms");
            m.values_mut().for_each(strip_runtime);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_runtime),
        _ => {}
    }
}

#[test]
fn unknown_suite_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "lambda = 0.4\n");
    let out = qghaar(&["run", "--config", cfg.to_str().unwrap(), "--suite", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn missing_config_exits_2() {
    let out = qghaar(&["run", "--config", "/nonexistent/model.cfg", "--suite", "structure"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn structure_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "# defaults except λ\nlambda = 0.4\n");
    let mut reports = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = dir.path().join(name);
        let out = qghaar(&["run", "--config", cfg.to_str().unwrap(), "--suite", "structure", "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let mut v = read_json(&path);
        assert_eq!(v["pass"], Value::Bool(true));
        assert_eq!(v["suite"], "structure");
        strip_runtime(&mut v);
        reports.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn zero_tolerance_exits_1_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "lambda = 0.4\ntol_exact = 0\n");
    let path = dir.path().join("r.json");
    let out = qghaar(&["run", "--config", cfg.to_str().unwrap(), "--suite", "structure", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v = read_json(&path);
    assert_eq!(v["pass"], Value::Bool(false));
    assert!(v["checks"].as_array().unwrap().iter().any(|c| c["pass"] == Value::Bool(false)));
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "lambda = 0.4\n");
    let csv = dir.path().join("sweep.csv");
    let out = qghaar(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--suite", "structure", "--param", "lambda", "--values", "0,0.1", "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "value,check,lhs_re,lhs_im,rhs_re,rhs_im,abs_err,rel_err,pass");
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|r| r.starts_with("0,")));
    assert!(rows.iter().any(|r| r.starts_with("0.1,")));
    assert!(rows.iter().all(|r| r.split(',').count() == 9 && r.ends_with("true")));
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "lambda = 0.4\n");
    let csv = dir.path().join("sweep.csv");
    let out = qghaar(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "basis_size", "--values", "", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1);
}

#[test]
fn bad_sweep_param_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "lambda = 0.4\n");
    let csv = dir.path().join("sweep.csv");
    let out = qghaar(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "seed", "--values", "1,2", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_default_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../default.cfg");
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(qghaar::ModelParams::from_config_str(&text).unwrap(), qghaar::ModelParams::default());
}
