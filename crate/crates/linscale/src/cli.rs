//! Command-line surface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use linscale_core::accounting::{
    calibrate_sigma, dp_to_gdp, gdp_of_run, gdp_to_epsilon, DpBudget, GdpBudget,
};
use linscale_core::hpo::{
    compare_methods, grid_search_at, random_search_at, run_adaptive_hpo_with, stage_seed,
    DpGdTrainer, HpoBackend, HpoReport, SweepResult, Trainer, TrainerBackend,
};
use linscale_core::optimizer::{Dataset, RunResult};
use linscale_core::theorycheck::{radius_experiment, softmax_hessian_probe, QuadraticProblem};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::compare::{run_compare, Comparison};
use crate::config::ExperimentConfig;
use crate::data::{gen_blobs, load_csv, write_csv};
use crate::error::{Error, Result};
use crate::exec::Pool;
use crate::record::{exact, render_plot, spend, Format, PlotBlock, Records};

#[derive(Debug, Parser)]
#[command(
    name = "linscale",
    version,
    about = "Private hyperparameter search by linear scaling of the total step size"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for independent trials.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Result file (replaced); stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Lines)]
    pub format: Format,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Shortcuts for common config keys; `--set KEY=VALUE` reaches any key.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub test_data: Option<PathBuf>,
    /// CSV files have a header row.
    #[arg(long, global = true)]
    pub header: bool,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub eps1: Option<f64>,
    #[arg(long, global = true)]
    pub eps2: Option<f64>,
    /// Trials per sweep.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    #[arg(long, global = true)]
    pub degree: Option<usize>,
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub steps: Option<u64>,
    /// Any config key, value in TOML syntax (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noise multiplier for a guarantee (`mu`, or `epsilon`/`delta`) over `steps`.
    Calibrate,
    /// Split the total budget between sweeps and the final run.
    Plan,
    /// One DP-GD run at `eta`, `steps`.
    Train,
    /// One sweep at `mu`, or at `eps1` when `mu` is unset.
    Sweep,
    /// Sweeps, fit, extrapolation and the final run.
    Hpo,
    /// One random total step size at the full budget.
    Random,
    /// Full-budget runs on a log grid, best by test accuracy.
    Grid,
    /// Random search, grid oracle and adaptive search over `seeds` seeds.
    Compare {
        /// Two-column table of total epsilon against mean test accuracy.
        #[arg(long, value_name = "PATH")]
        plot: Option<PathBuf>,
    },
    /// Monte-Carlo noisy radius on a quadratic against its bound.
    Radius {
        /// Two-column table of step against mean distance and bound.
        #[arg(long, value_name = "PATH")]
        plot: Option<PathBuf>,
    },
    /// Largest softmax Hessian entry over random and constructed probes.
    ProbeLipschitz,
    /// Write a synthetic blob dataset as CSV.
    GenData {
        #[arg(long, value_name = "PATH")]
        train: PathBuf,
        #[arg(long, value_name = "PATH")]
        test: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::Plan => "plan",
            Command::Train => "train",
            Command::Sweep => "sweep",
            Command::Hpo => "hpo",
            Command::Random => "random",
            Command::Grid => "grid",
            Command::Compare { .. } => "compare",
            Command::Radius { .. } => "radius",
            Command::ProbeLipschitz => "probe-lipschitz",
            Command::GenData { .. } => "gen-data",
        }
    }
}

fn insert(table: &mut toml::Table, key: &str, value: impl Into<toml::Value>) {
    table.insert(key.into(), value.into());
}

fn path_value(p: &Path) -> toml::Value {
    toml::Value::String(p.to_string_lossy().into_owned())
}

/// Config file overlaid with command-line values.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut table = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    let o = &cli.overrides;
    for item in &o.set {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        table.insert(key.to_string(), value);
    }
    if let Some(v) = &o.data {
        table.insert("data".into(), path_value(v));
    }
    if let Some(v) = &o.test_data {
        table.insert("test_data".into(), path_value(v));
    }
    if o.header {
        insert(&mut table, "header", true);
    }
    for (key, v) in [
        ("epsilon", o.epsilon),
        ("delta", o.delta),
        ("eps1", o.eps1),
        ("eps2", o.eps2),
    ] {
        if let Some(v) = v {
            insert(&mut table, key, v);
        }
    }
    for (key, v) in [("mu", o.mu), ("sigma", o.sigma), ("eta", o.eta)] {
        if let Some(v) = v {
            insert(&mut table, key, v);
        }
    }
    for (key, v) in [
        ("runs_per_sweep", o.runs.map(|v| v as u64)),
        ("degree", o.degree.map(|v| v as u64)),
        ("steps", o.steps),
    ] {
        if let Some(v) = v {
            let v =
                i64::try_from(v).map_err(|_| Error::Config(format!("{key} = {v} is too large")))?;
            insert(&mut table, key, v);
        }
    }
    if let Some(v) = &cli.out {
        table.insert("out".into(), path_value(v));
    }
    let mut config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    config.validate()?;
    Ok(config)
}

/// Training and test sets for `seed`: the CSV files when configured,
/// otherwise blobs.
pub fn load_data(config: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    let Some(train_path) = &config.data else {
        return gen_blobs(&config.blob_spec(seed));
    };
    let train = load_csv(train_path, config.header)?;
    let test = match &config.test_data {
        Some(p) => load_csv(p, config.header)?,
        None => train.clone(),
    };
    if train.dim() != test.dim() {
        return Err(Error::InvalidInput(format!(
            "training data has {} features, test data {}",
            train.dim(),
            test.dim()
        )));
    }
    let classes = train.classes().max(test.classes());
    Ok((train.with_classes(classes)?, test.with_classes(classes)?))
}

fn trainer<'a>(
    config: &ExperimentConfig,
    train: &'a Dataset,
    test: &'a Dataset,
) -> DpGdTrainer<'a> {
    DpGdTrainer {
        momentum: config.momentum,
        free_step: config.free_step,
        clip_norm: config.clip_norm,
        ..DpGdTrainer::new(train, test)
    }
}

fn target_mu(config: &ExperimentConfig, fallback_epsilon: f64) -> Result<GdpBudget> {
    match config.mu {
        Some(mu) => Ok(GdpBudget::new(mu)?),
        None => Ok(dp_to_gdp(DpBudget::new(fallback_epsilon, config.delta)?)?),
    }
}

fn run_body(result: &RunResult) -> Value {
    let c = &result.config;
    json!({
        "eta": c.eta,
        "steps": c.steps,
        "r": c.eta * c.steps as f64,
        "sigma": c.sigma,
        "mu": result.mu.map(|m| exact(m.mu())),
        "train_accuracy": result.train_accuracy,
        "test_accuracy": result.test_accuracy,
        "train_loss": result.train_loss,
        "test_loss": result.test_loss,
        "diverged_at": result.diverged_at,
    })
}

fn push_sweep(
    records: &mut Records,
    seed: u64,
    stage: usize,
    sweep: &SweepResult,
    delta: f64,
) -> Result<()> {
    for t in &sweep.trials {
        records.push(
            "trial",
            seed,
            &Value::Null,
            json!({
                "stage": stage,
                "trial": t.index,
                "r": t.r,
                "eta": t.eta,
                "steps": t.steps,
                "sigma": t.sigma,
                "mu": exact(t.mu.mu()),
                "train_accuracy": t.train_accuracy,
                "diverged_at": t.diverged_at,
            }),
        );
    }
    records.push(
        "sweep",
        seed,
        &Value::Null,
        json!({
            "stage": stage,
            "mu": exact(sweep.mu.mu()),
            "epsilon": exact(gdp_to_epsilon(sweep.mu, delta)?),
            "best_r": sweep.best_r,
            "best_trial": sweep.best_index,
        }),
    );
    Ok(())
}

fn push_hpo(records: &mut Records, seed: u64, report: &HpoReport) -> Result<()> {
    let delta = report.plan.total.delta();
    for (stage, sweep) in report.sweeps.iter().enumerate() {
        push_sweep(records, seed, stage, sweep, delta)?;
    }
    records.push(
        "fit",
        seed,
        &Value::Null,
        json!({
            "degree": report.fit.degree,
            "coefficients": report.fit.coefficients,
            "points": report.sweeps.iter().map(|s| [s.mu.mu(), s.best_r]).collect::<Vec<_>>(),
            "mu_f": exact(report.plan.mu_f.mu()),
            "r_extrapolated": report.r_extrapolated,
            "r_star": report.r_star,
            "warnings": report.warnings,
        }),
    );
    let mut body = run_body(&report.final_run);
    body["method"] = "hpo".into();
    records.push("run", seed, &Value::Null, body);
    Ok(())
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub records: Records,
    /// Plot table, when one was requested.
    pub plot: Option<String>,
    /// Set when the records were written but the experiment as a whole failed.
    pub failure: Option<String>,
}

/// Executes `command` and returns its records.
pub fn execute(command: &Command, config: &ExperimentConfig) -> Result<Outcome> {
    let mut records = Records::new(command.name(), config.hash());
    let seed = config.seed;
    let delta = config.delta;
    let pool = Pool::new(config.workers)?;
    let mut plot = None;
    let mut failure = None;
    match command {
        Command::Calibrate => {
            let mu = target_mu(config, config.epsilon)?;
            let sigma = calibrate_sigma(mu, config.steps)?;
            records.push(
                "calibration",
                seed,
                &Value::Null,
                json!({
                    "mu": exact(mu.mu()),
                    "epsilon": exact(gdp_to_epsilon(mu, delta)?),
                    "delta": exact(delta),
                    "steps": config.steps,
                    "sigma": exact(sigma),
                }),
            );
        }
        Command::Plan => {
            let plan = config.plan()?;
            let stages: Vec<Value> = plan
                .stages
                .iter()
                .zip(&plan.stage_epsilons)
                .map(|(mu, eps)| json!({ "epsilon": exact(*eps), "mu": exact(mu.mu()) }))
                .collect();
            records.push(
                "plan",
                seed,
                &Value::Null,
                json!({
                    "total_epsilon": exact(plan.total.epsilon()),
                    "delta": exact(plan.total.delta()),
                    "runs_per_sweep": plan.n,
                    "stages": stages,
                    "mu_f": exact(plan.mu_f.mu()),
                    "eps_f": exact(plan.eps_f),
                    "composed_mu": exact(plan.composed().mu()),
                    "composed_epsilon": exact(plan.composed_epsilon()?),
                }),
            );
        }
        Command::Train => {
            let (train, test) = load_data(config, seed)?;
            let t = trainer(config, &train, &test);
            let sigma = match config.sigma {
                Some(s) => s,
                None => calibrate_sigma(target_mu(config, config.epsilon)?, config.steps)?,
            };
            let cfg = t.config(config.eta, config.steps, sigma, seed);
            let result = match t.train(&cfg) {
                Ok(r) => r,
                Err(linscale_core::Error::Diverged { step }) => t.zero_model(&cfg, step as u64)?,
                Err(e) => return Err(e.into()),
            };
            for s in &result.log {
                records.push(
                    "step",
                    seed,
                    &Value::Null,
                    json!({ "step": s.step, "loss": s.loss, "grad_norm": s.grad_norm }),
                );
            }
            let mut body = run_body(&result);
            body["method"] = "train".into();
            records.push("run", seed, &Value::Null, body);
            let runs: Vec<GdpBudget> = if sigma > 0.0 {
                vec![gdp_of_run(sigma, config.steps)?]
            } else {
                vec![]
            };
            records.set_spend(&spend(&runs, delta)?);
        }
        Command::Sweep => {
            let (train, test) = load_data(config, seed)?;
            let t = trainer(config, &train, &test);
            let backend = TrainerBackend::with_executor(&t, &pool);
            let mu = target_mu(config, config.eps1)?;
            let sweep = backend.sweep(
                mu,
                config.runs_per_sweep,
                &config.space()?,
                stage_seed(seed, 0),
            )?;
            push_sweep(&mut records, seed, 0, &sweep, delta)?;
            let runs: Vec<GdpBudget> = sweep.trials.iter().map(|t| t.mu).collect();
            records.set_spend(&spend(&runs, delta)?);
        }
        Command::Hpo => {
            let (train, test) = load_data(config, seed)?;
            let t = trainer(config, &train, &test);
            let backend = TrainerBackend::with_executor(&t, &pool);
            let report = run_adaptive_hpo_with(
                &backend,
                &config.plan()?,
                &config.space()?,
                config.degree,
                seed,
            )?;
            push_hpo(&mut records, seed, &report)?;
            records.push(
                "hpo",
                seed,
                &Value::Null,
                json!({
                    "r_star": report.r_star,
                    "test_accuracy": report.final_run.test_accuracy,
                    "composed_mu": exact(report.composed_mu.mu()),
                    "composed_epsilon": exact(report.composed_epsilon),
                }),
            );
            records.set_spend(&spend(&report.spent, delta)?);
        }
        Command::Random => {
            let (train, test) = load_data(config, seed)?;
            let t = trainer(config, &train, &test);
            let backend = TrainerBackend::with_executor(&t, &pool);
            let result = random_search_at(
                &backend,
                dp_to_gdp(config.total()?)?,
                &config.space()?,
                seed,
            )?;
            let mut body = run_body(&result);
            body["method"] = "random".into();
            records.push("run", seed, &Value::Null, body);
            records.set_spend(&spend(&result.mu.into_iter().collect::<Vec<_>>(), delta)?);
        }
        Command::Grid => {
            let (train, test) = load_data(config, seed)?;
            let t = trainer(config, &train, &test);
            let backend = TrainerBackend::with_executor(&t, &pool);
            let mu = dp_to_gdp(config.total()?)?;
            let oracle = grid_search_at(&backend, mu, &config.grid()?, &config.space()?, seed)?;
            for (i, g) in oracle.trials.iter().enumerate() {
                records.push(
                    "grid_trial",
                    seed,
                    &Value::Null,
                    json!({
                        "trial": i,
                        "r": g.r,
                        "eta": g.eta,
                        "steps": g.steps,
                        "train_accuracy": g.train_accuracy,
                        "test_accuracy": g.test_accuracy,
                        "diverged_at": g.diverged_at,
                    }),
                );
            }
            let mut body = run_body(&oracle.best);
            body["method"] = "grid".into();
            body["best_trial"] = oracle.best_index.into();
            body["selection"] = serde_json::to_value(oracle.selection).expect("serializes");
            records.push("run", seed, &Value::Null, body);
            let spent = oracle.best.mu.unwrap_or(mu);
            records.set_spend(&spend(&vec![spent; oracle.trials.len()], delta)?);
        }
        Command::Compare { plot: plot_path } => {
            let space = config.space()?;
            let grid = config.grid()?;
            let mut all_runs = Vec::new();
            let mut comparisons: Vec<Comparison> = Vec::new();
            for total in config.totals()? {
                let plan = config.plan_for(total)?;
                let cmp = run_compare(total, &config.seed_list(), |s| {
                    let (train, test) = load_data(config, s)?;
                    let t = trainer(config, &train, &test);
                    let backend = TrainerBackend::with_executor(&t, &pool);
                    Ok(compare_methods(
                        &backend,
                        &plan,
                        &space,
                        config.degree,
                        &grid,
                        s,
                    )?)
                });
                for row in &cmp.rows {
                    let mut body = serde_json::to_value(row).expect("serializes");
                    body["total_epsilon"] = exact(total.epsilon());
                    records.push("compare_seed", row.seed, &spend(&row.runs, delta)?, body);
                }
                all_runs.extend(cmp.runs());
                records.push(
                    "compare_mean",
                    seed,
                    &spend(&cmp.runs(), delta)?,
                    json!({
                        "total_epsilon": exact(total.epsilon()),
                        "seeds": config.seed_list(),
                        "completed": cmp.completed,
                        "random": cmp.random,
                        "oracle": cmp.oracle,
                        "hpo": cmp.hpo,
                        "rerr": cmp.rerr,
                    }),
                );
                comparisons.push(cmp);
            }
            if plot_path.is_some() {
                let block = |name: &str, f: fn(&Comparison) -> Option<f64>| {
                    let points = comparisons
                        .iter()
                        .filter_map(|c| f(c).map(|v| (c.total.epsilon(), v)))
                        .collect::<Vec<_>>();
                    PlotBlock::new(name, "epsilon", "test_accuracy", points)
                };
                plot = Some(render_plot(&[
                    block("random", |c| c.random),
                    block("oracle", |c| c.oracle),
                    block("hpo", |c| c.hpo),
                ]));
            }
            if comparisons.iter().all(|c| c.completed == 0) {
                failure = comparisons
                    .iter()
                    .flat_map(|c| c.rows.iter().filter_map(|r| r.error.clone()))
                    .next();
            }
        }
        Command::Radius { plot: plot_path } => {
            let problem = QuadraticProblem::spread(
                config.radius_dim,
                config.radius_alpha,
                config.radius_beta,
                seed,
            )?;
            let rep = radius_experiment(
                &problem,
                config.radius_eta,
                config.radius_sigma,
                config.radius_steps,
                config.radius_trials,
                seed,
            )?;
            records.push(
                "radius",
                seed,
                &Value::Null,
                json!({
                    "dim": config.radius_dim,
                    "alpha": config.radius_alpha,
                    "beta": config.radius_beta,
                    "eta": rep.eta,
                    "sigma": rep.sigma,
                    "steps": rep.steps,
                    "trials": rep.trials,
                    "c": rep.c,
                    "noise_norm_rho": rep.noise_norm_rho,
                    "empirical_mean_distance": rep.empirical_mean_distance,
                    "standard_error": rep.standard_error,
                    "bound": rep.bound,
                    "within_bound": rep.within_bound(3.0),
                    "mean_by_step": rep.mean_by_step,
                }),
            );
            if plot_path.is_some() {
                let steps = 1..=rep.steps;
                let mean = steps
                    .clone()
                    .zip(&rep.mean_by_step)
                    .map(|(t, &m)| (t as f64, m))
                    .collect();
                let bound = steps.map(|t| (t as f64, rep.bound_at(t))).collect();
                plot = Some(render_plot(&[
                    PlotBlock::new("mean distance", "step", "distance", mean),
                    PlotBlock::new("bound", "step", "distance", bound),
                ]));
            }
        }
        Command::ProbeLipschitz => {
            let p =
                softmax_hessian_probe(config.probe_dim, config.probe_classes, config.probes, seed)?;
            records.push(
                "probe",
                seed,
                &Value::Null,
                json!({
                    "dim": config.probe_dim,
                    "classes": config.probe_classes,
                    "probes": p.probes,
                    "max_entry": p.max_entry,
                    "random_max_entry": p.random_max_entry,
                    "constructed_entry": p.constructed_entry,
                }),
            );
        }
        Command::GenData {
            train: train_path,
            test: test_path,
        } => {
            let spec = config.blob_spec(seed);
            let (train, test) = gen_blobs(&spec)?;
            write_csv(train_path, &train)?;
            write_csv(test_path, &test)?;
            let digest = |p: &Path| -> Result<String> {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                Ok(Sha256::digest(&bytes)
                    .iter()
                    .map(|b| format!("{b:02x}"))
                    .collect())
            };
            records.push(
                "dataset",
                seed,
                &Value::Null,
                json!({
                    "classes": spec.classes,
                    "dim": spec.dim,
                    "train_rows": train.len(),
                    "test_rows": test.len(),
                    "data_seed": spec.seed,
                    "train_sha256": digest(train_path)?,
                    "test_sha256": digest(test_path)?,
                }),
            );
        }
    }
    Ok(Outcome {
        records,
        plot,
        failure,
    })
}

/// Resolves the configuration, runs the command and writes its results.
pub fn run(cli: &Cli) -> Result<()> {
    let config = resolve_config(cli)?;
    let outcome = execute(&cli.command, &config)?;
    outcome.records.write(cli.format, config.out.as_deref())?;
    if let (
        Command::Compare { plot: Some(path) } | Command::Radius { plot: Some(path) },
        Some(text),
    ) = (&cli.command, &outcome.plot)
    {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    match outcome.failure {
        Some(message) => Err(Error::Experiment(message)),
        None => Ok(()),
    }
}
