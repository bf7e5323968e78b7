use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const RUN: &str = r#"
dataset = "synthetic"
synthetic_samples = 200
synthetic_dim = 6
model = "logistic_l2"
lambda = 0.01
n_workers = 4
byz_count = 1
shard_mode = "full_copy"
algorithm = "marina"
gammas = [0.5]
aggregator = "cm"
compressor = "rand_k"
attack = "ipm"
rounds = 20
seeds = [1, 2]
"#;

fn byzvr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzvr")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_succeeds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let out_dir = dir.path().join("out");
    let out = byzvr(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["best_gamma"], 0.5);
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("trace_gamma0_seed2.csv").exists());
}

#[test]
fn overrides_and_config_flag_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let out = byzvr(&["fstar", "--config", &cfg, "--override", "lambda=0.1", "--override", "attack=\"alie\""]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let fstar: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(fstar["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &format!("{RUN}\nmystery_key = 3\n"));
    let out = byzvr(&["run", &bad, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery_key"));

    let missing = dir.path().join("nope.toml");
    assert_eq!(byzvr(&["run", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(byzvr(&["run"]).status.code(), Some(2));

    let cfg = write(dir.path(), "run.toml", RUN);
    assert_eq!(byzvr(&["run", &cfg, "--override", "byz_count=9"]).status.code(), Some(2));
}

#[test]
fn all_diverging_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", RUN);
    let out = byzvr(&[
        "run",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--override",
        "gammas=[1e9]",
        "--override",
        "lambda=1.0",
        "--override",
        "rounds=60",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn theory_and_certify_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let theory = write(
        dir.path(),
        "theory.toml",
        "l = 1.0\nl_pm = 0.5\ncall_pm = 1.0\nmu = 0.1\np = 0.1\nb = 4\nomega = 9\ng = 10\nc = 1.0\ndelta = 0.05\nbig_b = 0.0\nzeta2 = 0.1\n",
    );
    let out = byzvr(&["theory", &theory, "--epsilon", "0.01"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["outputs"]["a"].as_f64().unwrap() > 0.0);
    assert!(doc["prediction"].is_object());

    let certify = write(dir.path(), "agg.toml", "aggregator = \"cm\"\ntrials = 20\n");
    let out = byzvr(&["certify-aggregator", &certify]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["scale_robust"].is_boolean());
}
