use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dispersal"));
    c.env_remove("DISPERSAL_THREADS");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"))
}

fn run(args: &[&str], config: &Path, out: Option<&Path>) -> Output {
    let mut c = bin();
    c.args(args).arg("--config").arg(config);
    if let Some(o) = out {
        c.arg("--out").arg(o);
    }
    c.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL_ZERO: &str = r#"{
  "name": "small_zero",
  "kernel": {"kind": "gaussian", "sigma": 1.0},
  "grid": {"domain": "torus", "L": 16.0, "n": 64},
  "coefficient": {"c0": 0.0}
}"#;

#[test]
fn verify_constant_scenario_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "T1_1"], &scenario("constant_torus"), Some(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["theorem_id"], "T1_1");
    assert!(dir.path().join("verify.json").exists());
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("verify.metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config_hash"], report["scenario"]);
}

#[test]
fn malformed_config_exits_two_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{ \"kernel\": ");
    let out_dir = dir.path().join("out");
    let out = run(&["lyapunov"], &cfg, Some(&out_dir));
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out_dir.exists() || std::fs::read_dir(&out_dir).unwrap().next().is_none());
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL_ZERO.replace("\"name\"", "\"nmae\""));
    assert_eq!(run(&["simulate"], &cfg, None).status.code(), Some(2));
}

#[test]
fn amplitude_sweep_has_one_row_per_value() {
    let out = run(&["sweep"], &scenario("sweep_space_amplitude"), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>()[..2], ["scenario_id", "theorem"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let values: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    assert!(rows.iter().all(|r| &r[6] == "pass"));
}

#[test]
fn json_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_ZERO);
    let a = run(&["lyapunov"], &cfg, None);
    let b = run(&["lyapunov"], &cfg, None);
    assert_eq!(a.status.code(), Some(0));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_ZERO);
    let one = bin().args(["--threads", "1", "eigen", "--config"]).arg(&cfg).output().unwrap();
    let two = bin().args(["--threads", "2", "eigen", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, two.stdout);
}

#[test]
fn infeasible_bracket_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_ZERO.replace(
        "\"coefficient\": {\"c0\": 0.0}",
        "\"coefficient\": {\"c0\": 0.0},\n  \"params\": {\"bracket\": [0.0, 0.5]}",
    );
    let cfg = write_config(dir.path(), &body);
    let out = run(&["verify", "T1_2"], &cfg, None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_ZERO.replace(
        "\"coefficient\": {\"c0\": 0.0}",
        "\"coefficient\": {\"c0\": 0.0, \"modes\": [{\"amp\": 1.0, \"omega\": 1.0}]},\n  \"params\": {\"horizon\": 12.0}",
    );
    let cfg = write_config(dir.path(), &body);
    let out = run(&["--format", "csv", "verify", "T1_1"], &cfg, None);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn kernel_check_reports_hypotheses() {
    let out = run(&["kernel-check"], &scenario("stationary_cos"), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}
