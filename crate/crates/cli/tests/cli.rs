use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coexist_core::harness::ScenarioConfig;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coexist-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> String {
    let p = dir.join("scenario.json");
    fs::write(&p, cfg.to_json().unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn short() -> ScenarioConfig {
    ScenarioConfig {
        duration_ms: 1_000,
        ..ScenarioConfig::default()
    }
}

#[test]
fn validate_accepts_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &ScenarioConfig::default());
    let out = bin(&["validate", "--config", &cfg]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn validate_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"schema_version": 1, "duration_ms": 0}"#).unwrap();
    let out = bin(&["validate", "--config", p.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("duration_ms"));

    fs::write(&p, r#"{"schema_version": 1, "bogus_key_m": 3}"#).unwrap();
    assert!(!bin(&["validate", "--config", p.to_str().unwrap()]).status.success());

    let missing = dir.path().join("nope.json");
    assert!(!bin(&["validate", "--config", missing.to_str().unwrap()]).status.success());
}

#[test]
fn run_writes_results_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &short());
    let out_dir = dir.path().join("out");
    let out = bin(&[
        "run", "--config", &cfg, "--seed", "9", "--replications", "2", "--load", "low", "--step",
        "both", "--out", out_dir.to_str().unwrap(), "--trace",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    for r in 0..2 {
        for s in 1..=2 {
            assert!(out_dir.join(format!("trace_rep{r}_step{s}.jsonl")).exists());
        }
    }
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"master_seed\": 9"));
}

#[test]
fn single_step_run_and_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &short());
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = bin(&[
            "run", "--config", &cfg, "--seed", "3", "--replications", "2", "--load", "high",
            "--step", "2", "--out", out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        csvs.push(fs::read(out_dir.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1) == Some("2")));
}

#[test]
fn unknown_load_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &short());
    let out = bin(&["run", "--config", &cfg, "--load", "extreme", "--out", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("extreme"));
}

#[test]
fn calibrate_reports_an_error_for_an_unreachable_band() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short();
    cfg.calibration.duration_ms = 500;
    // even the smallest rate saturates
    cfg.calibration.min_rate_per_s = 15.0;
    cfg.calibration.max_rate_per_s = 20.0;
    let cfg = write_config(dir.path(), &cfg);
    let out = bin(&["calibrate", "--config", &cfg, "--load", "low"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("calibration"));
}
