//! Black-box tests of the `tcsf` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use tcsf::bench::BenchConfig;

fn tcsf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcsf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("tcsf-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn print_config_round_trips_through_toml() {
    let out = tcsf(&[
        "bench",
        "--print-config",
        "--seed",
        "7",
        "--setting",
        "constant",
        "--runs",
        "5",
    ]);
    assert!(out.status.success());
    let cfg = BenchConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.master_seed, 7);
    assert_eq!(cfg.n_runs, 5);
    assert_eq!(cfg.setting, tcsf::bench::Setting::Constant);
}

#[test]
fn bench_writes_all_outputs() {
    let dir = scratch("bench");
    let cfg = BenchConfig {
        n_runs: 2,
        objectives: vec!["quadratic".into()],
        noises: vec!["type3".into()],
        ..Default::default()
    };
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cfg.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let out = tcsf(&[
        "bench",
        "--config",
        path.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout["cells"].as_array().unwrap().len(), 5);
    for f in [
        "report.csv",
        "report.json",
        "runs.jsonl",
        "resolved-config.toml",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let runs = std::fs::read_to_string(dir.join("runs.jsonl")).unwrap();
    assert_eq!(runs.lines().count(), 10);
    for line in runs.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    let resolved =
        BenchConfig::from_toml(&std::fs::read_to_string(dir.join("resolved-config.toml")).unwrap())
            .unwrap();
    assert_eq!(resolved, cfg);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_config_is_rejected_with_its_path() {
    let dir = scratch("badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cfg.toml");
    let mut cfg = BenchConfig::default();
    cfg.estimators[1] = "newton".into();
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let out = tcsf(&[
        "bench",
        "--config",
        path.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("estimators[1]"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_moments_passes_and_exits_zero() {
    let dir = scratch("verify");
    let out = tcsf(&[
        "verify",
        "moments",
        "--out-dir",
        dir.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    assert!(dir.join("report.json").is_file() && dir.join("resolved-config.toml").is_file());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let out = tcsf(&["verify", "everything"]);
    assert!(!out.status.success());
}

#[test]
fn constants_json_reports_exact_normalizer() {
    let dir = scratch("constants");
    let out = tcsf(&[
        "constants",
        "--dim",
        "2",
        "--samples",
        "20000",
        "--format",
        "json",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // d = 2: c1 = 2π(1 − 1/√2) / (π^{3/2} / Γ(3/2)) = 1 − 1/√2.
    let c1 = v["c1"].as_f64().unwrap();
    assert!((c1 - (1.0 - 0.5f64.sqrt())).abs() < 1e-9, "c1 = {c1}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn run_dumps_a_single_trajectory() {
    let dir = scratch("run");
    let out = tcsf(&[
        "run",
        "--objective",
        "rastrigin",
        "--noise",
        "type3",
        "--estimator",
        "tcsf",
        "--horizon",
        "200",
        "--seed",
        "3",
        "--out-dir",
        dir.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("k,f_true,g_norm\n"));
    assert!(csv.lines().count() > 2);
    assert_eq!(
        std::fs::read_to_string(dir.join("runs.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );
    std::fs::remove_dir_all(&dir).unwrap();
}
