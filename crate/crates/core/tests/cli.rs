use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TUPLE: &str =
    "mu = 0.04\nmu1 = 0.18\nmu2 = 0.03\np0 = 0.6\np10 = 0.2\np11 = 0.12\np2 = 0.08\ndelta_over_pi = 0.1\n";

fn tfqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfqkd"))
        .args(args)
        .env_remove("TFQKD_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("{TUPLE}n_tot = 1e13\ndistance_km = 100.0\n{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn rate_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = tfqkd(&["rate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["feasible"], Value::Bool(true));
    assert_eq!(v["g_bits"].as_u64(), Some(1_705_911_937));
    assert_eq!(v["manifest"]["command"], "rate");
    assert_eq!(v["manifest"]["config_digest"].as_str().map(str::len), Some(64));
}

#[test]
fn config_digest_tracks_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let digest = |extra: &[&str]| {
        let mut args = vec!["rate", "--config", cfg.as_str()];
        args.extend_from_slice(extra);
        json(&tfqkd(&args))["manifest"]["config_digest"]
            .as_str()
            .unwrap()
            .to_owned()
    };
    assert_eq!(digest(&[]), digest(&[]));
    assert_ne!(digest(&[]), digest(&["--distance", "101"]));
}

#[test]
fn inline_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = tfqkd(&["rate", "--config", &cfg, "--distance", "150", "--variant", "four-phase"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["distance_km"].as_f64(), Some(150.0));
}

#[test]
fn invalid_tuple_exits_2_naming_the_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = tfqkd(&["rate", "--config", &cfg, "--p10", "0.001"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("p10") || err.to_lowercase().contains("vacuum"), "{err}");
}

#[test]
fn missing_file_exits_1() {
    let out = tfqkd(&["rate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.toml"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bogus = 1\n");
    assert_eq!(tfqkd(&["rate", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn curve_single_distance() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let out = tfqkd(&[
        "curve",
        "--n-tot",
        "1e13",
        "--from",
        "100",
        "--to",
        "100",
        "--budget",
        "300",
        "--restarts",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# manifest {"));
    assert!(lines[1].starts_with("distance_km,rate_per_pulse,"));
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("100"));
}

#[test]
fn optimize_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("opt.json");
    let out = tfqkd(&[
        "optimize",
        "--distance",
        "200",
        "--budget",
        "300",
        "--restarts",
        "2",
        "--seed",
        "4",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(file, json(&out));
    assert_eq!(file["manifest"]["seed"].as_u64(), Some(4));
    assert!(file["params"]["mu"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_dominance_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let ok = tfqkd(&["verify-dominance", "--config", &cfg]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    assert_eq!(json(&ok)["pass"], Value::Bool(true));

    let inflated = tfqkd(&["verify-dominance", "--config", &cfg, "--lambda-scale", "1.05"]);
    assert_ne!(inflated.status.code(), Some(0));
    assert_eq!(json(&inflated)["pass"], Value::Bool(false));

    let small = tfqkd(&["verify-dominance", "--config", &cfg, "--n-max", "1"]);
    assert!(String::from_utf8_lossy(&small.stderr).contains("warning"));
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_tfqkd"))
            .args(["simulate", "--config", &cfg, "--rounds", "2500000", "--seed", "8"])
            .env("TFQKD_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let mut v = json(&out);
        v.as_object_mut().unwrap().remove("manifest");
        v
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    assert_eq!(one["n_rounds"].as_u64(), Some(2_500_000));
}

#[test]
fn simulate_trace_has_one_record_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let trace = dir.path().join("rounds.bin");
    let out = tfqkd(&[
        "simulate",
        "--config",
        &cfg,
        "--rounds",
        "1000",
        "--model",
        "physical",
        "--trace",
        trace.to_str().unwrap(),
        "--evaluate",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::metadata(&trace).unwrap().len(), 28 * 1000);
    assert!(json(&out)["evaluation"].is_object());
}
