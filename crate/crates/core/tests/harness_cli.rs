use std::path::{Path, PathBuf};
use std::process::Command;

use plmc::bounds::{self, PlanMode};
use plmc::harness::{self, ExperimentConfig, SweepAxis};
use plmc::metrics::SampleSet;

const SMALL: &str = r#"{
    "schema_version": 1,
    "potential": {"kind": "abs", "dim": 1, "regularizer": {"lambda": 1.0}},
    "sampler": {"variant": "PLMC", "eta": 0.01, "mu": 0.05, "K": 300},
    "init": {"kind": "gaussian_at_min"},
    "ensemble": {"n_chains": 400, "seed": 5},
    "metrics": {
        "reference": {"kind": "quadrature", "span": [-10.0, 10.0], "n_cells": 2000},
        "compute": [{"kind": "tv_histogram", "n_bins": 40}, {"kind": "w2_1d"}, {"kind": "moment4"}]
    }
}"#;

fn small() -> ExperimentConfig {
    ExperimentConfig::from_json(SMALL).unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn sample(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sample")).args(args).output().unwrap()
}

#[test]
fn shipped_configs_validate() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::from_path(&path).unwrap();
        assert!(harness::validate(&cfg).is_empty(), "{}: {:?}", path.display(), harness::validate(&cfg));
    }
}

#[test]
fn planner_output_passes_through_unchanged() {
    let cfg = ExperimentConfig::from_path(&configs().join("abs_1d_planned.json")).unwrap();
    let out = harness::run_experiment(&cfg).unwrap();
    assert!(out.samples.is_none(), "dry run draws nothing");
    let pot = harness::build_potential(&cfg.potential, None).unwrap();
    let consts = harness::problem_constants(&cfg, &pot);
    assert_eq!(consts.w2_init, 1.0);
    let direct = bounds::plan_tv(0.5, &consts).unwrap();
    assert_eq!(out.report.plan, direct);
    assert_eq!(harness::plan_for(&cfg, PlanMode::Tv, 0.5).unwrap(), direct);
}

#[test]
fn single_value_sweep_equals_a_run() {
    let cfg = small();
    let table = harness::sweep(&cfg, SweepAxis::K, &[300.0]).unwrap();
    let run = harness::run_experiment(&cfg).unwrap();
    assert_eq!(table.reports[0].without_timing(), run.report.without_timing());
    let csv = table.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "axis,value,tv_histogram,w2_1d,moment4,eta,mu,K,gradient_calls,config_hash");
    assert!(lines.next().unwrap().starts_with("K,300.0,"));
}

#[test]
fn runs_are_reproducible_and_written() {
    let cfg = small();
    let a = harness::run_experiment(&cfg).unwrap();
    let b = harness::with_threads(Some(2), || harness::run_experiment(&cfg)).unwrap().unwrap();
    assert_eq!(a.report.without_timing(), b.report.without_timing());
    assert_eq!(a.samples, b.samples);
    let tv = a.report.metric("tv_histogram").unwrap();
    assert!(tv < 0.2, "{tv}");

    let dir = tempfile::tempdir().unwrap();
    harness::write_run(&a, dir.path()).unwrap();
    let back = SampleSet::from_csv_str(&std::fs::read_to_string(dir.path().join("samples.csv")).unwrap()).unwrap();
    assert_eq!(Some(back), a.samples);
    assert!(dir.path().join("truth.csv").exists());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_hash"], a.report.config_hash);
}

#[test]
fn validate_reports_field_paths() {
    let bad = SMALL.replace("\"lambda\": 1.0", "\"lambda\": -1.0").replace("\"eta\": 0.01", "\"eta\": -0.01");
    let diag = harness::validate(&ExperimentConfig::from_json(&bad).unwrap());
    assert!(diag.iter().any(|d| d.contains("potential.regularizer.lambda")), "{diag:?}");
    assert!(diag.iter().any(|d| d.contains("sampler.eta")), "{diag:?}");
}

#[test]
fn cli_validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, SMALL).unwrap();
    assert_eq!(sample(&["validate", good.to_str().unwrap()]).status.code(), Some(0));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, SMALL.replace("\"n_chains\": 400", "\"n_chains\": 0")).unwrap();
    let out = sample(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ensemble.n_chains"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{").unwrap();
    assert_eq!(sample(&["validate", broken.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn cli_plan_prints_json() {
    let path = configs().join("abs_1d_planned.json");
    let out = sample(&["plan", path.to_str().unwrap(), "--eps", "0.5", "--mode", "tv"]);
    assert!(out.status.success());
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["mode"], "tv");
    assert!(plan["K"].as_u64().unwrap() > 0);
    let out = sample(&["plan", path.to_str().unwrap(), "--eps", "0.5", "--mode", "det-w2"]);
    assert_eq!(out.status.code(), Some(2), "alpha = 0 has no deterministic plan");
}

#[test]
fn cli_run_and_sweep_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let run_dir = dir.path().join("run");
    let out = sample(&["run", cfg.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run_dir.join("samples.csv").exists() && run_dir.join("report.json").exists());

    let sweep_dir = dir.path().join("sweep");
    let out = sample(&["sweep", cfg.to_str().unwrap(), "--axis", "mu", "--values", "0.02,0.05", "--out", sweep_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let out = sample(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("dry").to_str().unwrap(), "--dry-run"]);
    assert!(out.status.success());
    assert!(!dir.path().join("dry/samples.csv").exists());
}
