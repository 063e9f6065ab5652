use std::path::Path;
use std::process::Command;

use linscale::compare::{run_compare, summarize, SeedOutcome};
use linscale::config::ExperimentConfig;
use linscale_core::accounting::{plan_budget, DpBudget, GdpBudget};
use linscale_core::hpo::{compare_methods, HpoBackend, SearchSpace, SweepResult, TrialRecord};
use linscale_core::optimizer::{Matrix, RunResult, TrainConfig};
use linscale_core::Result as CoreResult;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_linscale"))
}

fn run_ok(args: &[&str], dir: &Path) -> String {
    let out = bin().args(args).current_dir(dir).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(args: &[&str], dir: &Path) -> i32 {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn defaults_round_trip_through_toml() {
    let config = ExperimentConfig::default();
    assert_eq!(
        ExperimentConfig::from_toml(&config.to_toml()).unwrap(),
        config
    );
    assert_eq!(ExperimentConfig::from_toml("").unwrap(), config);
    config.validate().unwrap();
}

#[test]
fn unknown_keys_and_bad_values_are_config_errors() {
    let err = ExperimentConfig::from_toml("epsilonn = 1.0").unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let bad = ExperimentConfig {
        degree: 2,
        ..Default::default()
    };
    assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
    let ok = ExperimentConfig {
        degree: 2,
        eps3: Some(0.3),
        ..Default::default()
    };
    ok.validate().unwrap();
    assert_eq!(ok.plan().unwrap().stages.len(), 3);
    let bad_space = ExperimentConfig {
        eta_min: 3.0,
        ..Default::default()
    };
    assert_eq!(bad_space.validate().unwrap_err().exit_code(), 2);
    let bad_blobs = ExperimentConfig {
        split: 1.5,
        ..Default::default()
    };
    assert_eq!(bad_blobs.validate().unwrap_err().exit_code(), 2);
}

#[test]
fn hash_ignores_workers_and_output_only() {
    let base = ExperimentConfig::default();
    let same = ExperimentConfig {
        workers: 8,
        out: Some("x.jsonl".into()),
        ..base.clone()
    };
    assert_eq!(base.hash(), same.hash());
    assert_eq!(base.hash().len(), 64);
    assert_ne!(
        base.hash(),
        ExperimentConfig {
            seed: 1,
            ..base.clone()
        }
        .hash()
    );
    assert_ne!(base.hash(), ExperimentConfig { eps1: 0.11, ..base }.hash());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "eps1 = 0.01\neps2 = 0.05\nseed = 9\n",
    )
    .unwrap();
    let line = run_ok(&["plan", "--config", "c.toml"], dir.path());
    let v: Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["seed"], 9);
    let eps_f: f64 = v["eps_f"].as_str().unwrap().parse().unwrap();
    assert!((0.98..=1.0).contains(&eps_f));

    let line = run_ok(
        &[
            "plan", "--config", "c.toml", "--eps1", "0.1", "--set", "eps2=0.2", "--seed", "3",
        ],
        dir.path(),
    );
    let v: Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["seed"], 3);
    let eps_f: f64 = v["eps_f"].as_str().unwrap().parse().unwrap();
    assert!((0.86..=0.90).contains(&eps_f));
}

#[test]
fn every_line_is_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(
        &[
            "sweep",
            "--set",
            "samples=300",
            "--set",
            "dim=8",
            "--set",
            "classes=3",
        ],
        dir.path(),
    );
    let lines: Vec<Value> = out
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    for v in &lines {
        for key in ["kind", "command", "version", "config_hash", "seed", "spend"] {
            assert!(v.get(key).is_some(), "{key} missing in {v}");
        }
        assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    }
    // three trials at eps1; the spend composes exactly those
    let spend = &lines[0]["spend"];
    assert_eq!(spend["runs"], 3);
    let mu: f64 = spend["mu"].as_str().unwrap().parse().unwrap();
    let trial_mu: f64 = lines[0]["mu"].as_str().unwrap().parse().unwrap();
    assert!((mu - 3f64.sqrt() * trial_mu).abs() < 1e-12);
    let ordering: Vec<(u64, u64)> = lines[..3]
        .iter()
        .map(|v| (v["stage"].as_u64().unwrap(), v["trial"].as_u64().unwrap()))
        .collect();
    assert_eq!(ordering, [(0, 0), (0, 1), (0, 2)]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(exit_code(&["plan"], p), 0);
    assert_eq!(exit_code(&["plan", "--set", "nope=1"], p), 2);
    assert_eq!(exit_code(&["plan", "--workers", "0"], p), 2);
    assert_eq!(exit_code(&["plan", "--config", "missing.toml"], p), 2);
    assert_eq!(exit_code(&["train", "--data", "missing.csv"], p), 2);
    assert_eq!(exit_code(&["plan", "--epsilon", "0.05"], p), 3);
    assert_eq!(
        exit_code(&["calibrate", "--epsilon", "1e-9", "--delta", "1e-12"], p),
        3
    );
    // identical points with conflicting labels and an enormous step size:
    // every sweep trial diverges
    std::fs::write(p.join("bad.csv"), "0,1,0\n0,1,0\n1,1,0\n").unwrap();
    let diverge = [
        "--data",
        "bad.csv",
        "--set",
        "eta_min=1e15",
        "--set",
        "eta_max=1e16",
        "--mu",
        "100",
    ];
    assert_eq!(exit_code(&[&["sweep"], &diverge[..]].concat(), p), 4);
    assert_eq!(exit_code(&[&["hpo"], &diverge[..]].concat(), p), 4);
}

#[test]
fn csv_data_drives_training() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    run_ok(
        &[
            "gen-data",
            "--train",
            "tr.csv",
            "--test",
            "te.csv",
            "--set",
            "samples=200",
            "--set",
            "dim=4",
            "--set",
            "classes=3",
        ],
        p,
    );
    let out = run_ok(
        &[
            "train",
            "--data",
            "tr.csv",
            "--test-data",
            "te.csv",
            "--sigma",
            "0",
            "--steps",
            "5",
        ],
        p,
    );
    let last: Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(last["kind"], "run");
    assert_eq!(last["spend"], Value::Null);
    assert_eq!(out.lines().count(), 5 + 1 + 1);
}

#[test]
fn table_format_renders_one_block_per_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(&["plan", "--format", "table"], dir.path());
    assert!(out.starts_with("# plan\n"));
    assert!(out.lines().nth(1).unwrap().contains("eps_f"));
}

/// Backend with fixed accuracies. Sweeps always pick r = 1, so the fit is
/// flat and the adaptive run lands on r = 1; the grid holds 68 and 0.5; the
/// random draw hits none of these.
struct Fixed;

fn fixed_run(r: f64, mu: GdpBudget) -> RunResult {
    let acc = if r == 1.0 {
        0.6263
    } else if r == 68.0 {
        0.68
    } else if r == 0.5 {
        0.1
    } else {
        0.44
    };
    RunResult {
        weights: Matrix::zeros(1, 1),
        train_accuracy: acc,
        test_accuracy: acc,
        train_loss: 0.0,
        test_loss: 0.0,
        log: Vec::new(),
        config: TrainConfig::new(r, 1, 1.0, 0),
        mu: Some(mu),
        diverged_at: None,
    }
}

impl HpoBackend for Fixed {
    fn sweep(&self, mu: GdpBudget, n: usize, _: &SearchSpace, _: u64) -> CoreResult<SweepResult> {
        let trials = (0..n)
            .map(|index| TrialRecord {
                index,
                r: 1.0,
                eta: 1.0,
                steps: 1,
                sigma: 1.0,
                mu,
                train_accuracy: Some(0.5),
                diverged_at: None,
            })
            .collect();
        SweepResult::from_trials(mu, trials)
    }

    fn full_run(&self, r: f64, mu: GdpBudget, _: &SearchSpace, _: u64) -> CoreResult<RunResult> {
        Ok(fixed_run(r, mu))
    }
}

#[test]
fn stub_accuracies_give_hand_computed_rerr() {
    let plan = plan_budget(DpBudget::new(1.0, 1e-5).unwrap(), 0.1, 0.2, 3).unwrap();
    let space = SearchSpace::new(0.01, 100.0, 1, 1).unwrap();
    let seeds = [0u64, 1, 2];
    let cmp = run_compare(plan.total, &seeds, |seed| {
        Ok(compare_methods(
            &Fixed,
            &plan,
            &space,
            1,
            &[68.0, 0.5],
            seed,
        )?)
    });
    assert_eq!(cmp.completed, 3);
    for (row, seed) in cmp.rows.iter().zip(seeds) {
        assert_eq!(row.seed, seed);
        assert_eq!(
            (row.random, row.oracle, row.hpo),
            (Some(0.44), Some(0.68), Some(0.6263))
        );
        assert_eq!(row.r_star, Some(1.0));
        // (62.63 - 44) / (68 - 44)
        assert!((row.rerr.unwrap() - 77.625).abs() < 1e-9);
        // random, two grid points, six sweep trials, final run
        assert_eq!(row.runs.len(), 1 + 2 + 7);
    }
    let rerr = cmp.rerr.unwrap();
    assert!((rerr - 77.625).abs() < 1e-9);
    // the published two-decimal value
    assert!((rerr - 77.63).abs() < 0.01);
}

#[test]
fn failed_seeds_are_recorded_and_excluded_from_means() {
    let total = DpBudget::new(1.0, 1e-5).unwrap();
    let mut rows = vec![SeedOutcome::failed(4, "boom".into())];
    let mut ok = SeedOutcome::failed(5, String::new());
    ok.error = None;
    ok.random = Some(0.44);
    ok.oracle = Some(0.68);
    ok.hpo = Some(0.6263);
    rows.push(ok);
    let cmp = summarize(total, rows);
    assert_eq!(cmp.completed, 1);
    assert_eq!(cmp.rows[0].error.as_deref(), Some("boom"));
    assert!((cmp.rerr.unwrap() - 77.625).abs() < 1e-9);

    let cmp = run_compare(total, &[1, 2], |_| {
        Err(linscale::Error::InvalidInput("no data".into()))
    });
    assert_eq!(cmp.completed, 0);
    assert!(cmp
        .rows
        .iter()
        .all(|r| r.error.as_deref() == Some("invalid input: no data")));
    assert_eq!(cmp.rerr, None);
}

#[test]
fn dataset_helpers_reject_mismatched_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("a.csv"), "0,1,2\n1,3,4\n").unwrap();
    std::fs::write(p.join("b.csv"), "0,1\n").unwrap();
    assert_eq!(
        exit_code(&["train", "--data", "a.csv", "--test-data", "b.csv"], p),
        2
    );
}
