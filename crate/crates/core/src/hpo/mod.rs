//! Private hyperparameter search over the total step size `r = eta * T`.
//!
//! A sweep spends `n` cheap runs at a small GDP budget and keeps the `r`
//! with the best training accuracy. Sweeps at two (or more) budgets give
//! points `(mu_i, r_i)`; a polynomial through them is evaluated at the final
//! budget `mu_f` to pick the `r` of the one expensive run.
//!
//! Randomness is keyed by seeds derived from the caller's seed: sweep stage
//! `i` uses `derive_seed(seed, i)`, trial `j` of a sweep uses
//! `derive_seed(stage_seed, j)`, and every full-budget run (the final run of
//! the adaptive search, the random-search run, each grid point) uses
//! [`full_run_seed`]. Methods compared on the same seed therefore see the
//! same noise for the same `(r, T)`.

mod baselines;
mod fit;
mod space;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::accounting::{
    compose_gdp, gdp_to_epsilon, Accountant, GaussianDp, GdpBudget, HpoBudgetPlan,
};
use crate::exec::{Executor, Sequential};
use crate::optimizer::{dp_gd_train, Dataset, RunResult, TrainConfig};
use crate::rng::{derive_seed, SeededRng};
use crate::{Error, Result};

pub use baselines::{
    compare_methods, grid_search, grid_search_at, random_search, random_search_at, rerr,
    ComparisonRow, GridTrial, OracleResult, Selection,
};
pub use fit::{fit_scaling, ScalingFit};
pub use space::{decompose_r, sample_r, SearchSpace, PRODUCT_TOLERANCE};

/// Runs per sweep used when none is specified.
pub const DEFAULT_RUNS_PER_SWEEP: usize = 3;

const FULL_RUN_TAG: u64 = 0xF1A1_0000;
const RANDOM_DRAW_TAG: u64 = 0xAA5D_0000;

/// Seed shared by every full-budget run made for `seed`.
pub fn full_run_seed(seed: u64) -> u64 {
    derive_seed(seed, FULL_RUN_TAG)
}

/// Seed of sweep stage `stage`.
pub fn stage_seed(seed: u64, stage: usize) -> u64 {
    derive_seed(seed, stage as u64)
}

fn random_draw_seed(seed: u64) -> u64 {
    derive_seed(seed, RANDOM_DRAW_TAG)
}

/// Something that turns hyperparameters into a trained model.
pub trait Trainer: Sync {
    /// Full configuration for a run with these hyperparameters.
    fn config(&self, eta: f64, steps: u64, sigma: f64, seed: u64) -> TrainConfig {
        TrainConfig::new(eta, steps, sigma, seed)
    }

    fn train(&self, config: &TrainConfig) -> Result<RunResult>;

    /// What a diverged run reports instead of a model.
    fn zero_model(&self, config: &TrainConfig, diverged_at: u64) -> Result<RunResult>;
}

/// [`dp_gd_train`] on fixed training and test sets.
#[derive(Debug, Clone, Copy)]
pub struct DpGdTrainer<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub momentum: f64,
    pub free_step: bool,
    pub clip_norm: f64,
}

impl<'a> DpGdTrainer<'a> {
    pub fn new(train: &'a Dataset, test: &'a Dataset) -> Self {
        Self {
            train,
            test,
            momentum: 0.9,
            free_step: true,
            clip_norm: 1.0,
        }
    }
}

impl Trainer for DpGdTrainer<'_> {
    fn config(&self, eta: f64, steps: u64, sigma: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            momentum: self.momentum,
            free_step: self.free_step,
            clip_norm: self.clip_norm,
            ..TrainConfig::new(eta, steps, sigma, seed)
        }
    }

    fn train(&self, config: &TrainConfig) -> Result<RunResult> {
        dp_gd_train(self.train, config, self.test)
    }

    fn zero_model(&self, config: &TrainConfig, diverged_at: u64) -> Result<RunResult> {
        RunResult::zero_model(self.train, self.test, config.clone(), diverged_at)
    }
}

/// One sweep trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub r: f64,
    pub eta: f64,
    pub steps: u64,
    pub sigma: f64,
    /// Guarantee actually spent by the trial.
    pub mu: GdpBudget,
    /// `None` when the run diverged.
    pub train_accuracy: Option<f64>,
    pub diverged_at: Option<u64>,
}

impl TrialRecord {
    fn score(&self) -> f64 {
        self.train_accuracy.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mu: GdpBudget,
    pub best_r: f64,
    pub best_index: usize,
    pub trials: Vec<TrialRecord>,
}

impl SweepResult {
    /// Picks the trial with the highest training accuracy (earliest on
    /// ties, diverged trials last).
    pub fn from_trials(mu: GdpBudget, trials: Vec<TrialRecord>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::invalid("a sweep needs at least one trial"));
        }
        if trials.iter().all(|t| t.train_accuracy.is_none()) {
            return Err(Error::SweepFailed { trials });
        }
        let mut best = 0;
        for (i, t) in trials.iter().enumerate() {
            if t.score() > trials[best].score() {
                best = i;
            }
        }
        Ok(Self {
            mu,
            best_r: trials[best].r,
            best_index: best,
            trials,
        })
    }
}

/// The two operations the adaptive search is built from. Implemented by
/// [`TrainerBackend`]; tests substitute stubs.
pub trait HpoBackend {
    fn sweep(&self, mu: GdpBudget, n: usize, space: &SearchSpace, seed: u64)
        -> Result<SweepResult>;

    /// One run at total step size `r` with guarantee `mu`. Divergence is
    /// reported through [`RunResult::diverged_at`], not as an error.
    fn full_run(&self, r: f64, mu: GdpBudget, space: &SearchSpace, seed: u64) -> Result<RunResult>;

    /// Independent full runs sharing `mu` and `seed`, in input order.
    fn full_runs(
        &self,
        rs: &[f64],
        mu: GdpBudget,
        space: &SearchSpace,
        seed: u64,
    ) -> Result<Vec<RunResult>> {
        rs.iter()
            .map(|&r| self.full_run(r, mu, space, seed))
            .collect()
    }
}

/// [`HpoBackend`] that trains with a [`Trainer`], calibrates noise with an
/// [`Accountant`] and fans independent runs out through an [`Executor`].
pub struct TrainerBackend<'a, T, A = GaussianDp, E = Sequential> {
    pub trainer: &'a T,
    pub accountant: A,
    pub exec: &'a E,
}

impl<'a, T: Trainer> TrainerBackend<'a, T> {
    pub fn new(trainer: &'a T) -> Self {
        Self {
            trainer,
            accountant: GaussianDp,
            exec: &Sequential,
        }
    }
}

impl<'a, T: Trainer, E: Executor> TrainerBackend<'a, T, GaussianDp, E> {
    pub fn with_executor(trainer: &'a T, exec: &'a E) -> Self {
        Self {
            trainer,
            accountant: GaussianDp,
            exec,
        }
    }
}

impl<T: Trainer, A: Accountant, E: Executor> TrainerBackend<'_, T, A, E> {
    /// Decomposes `r`, calibrates, trains; divergence becomes a zero model.
    fn run_at(
        &self,
        r: f64,
        mu: GdpBudget,
        space: &SearchSpace,
        seed: u64,
    ) -> Result<(RunResult, GdpBudget)> {
        let mut rng = SeededRng::stream(seed, 0);
        let (eta, steps) = decompose_r(r, space, &mut rng)?;
        let sigma = self.accountant.calibrate(mu, steps)?;
        let spent = self.accountant.spent(sigma, steps)?;
        let config = self.trainer.config(eta, steps, sigma, derive_seed(seed, 1));
        let result = match self.trainer.train(&config) {
            Ok(result) => result,
            Err(Error::Diverged { step }) => self.trainer.zero_model(&config, step as u64)?,
            Err(e) => return Err(e),
        };
        Ok((result, spent))
    }
}

impl<T: Trainer, A: Accountant, E: Executor> HpoBackend for TrainerBackend<'_, T, A, E> {
    fn sweep(
        &self,
        mu: GdpBudget,
        n: usize,
        space: &SearchSpace,
        seed: u64,
    ) -> Result<SweepResult> {
        if n == 0 {
            return Err(Error::invalid("a sweep needs at least one trial"));
        }
        let trials = self.exec.map(n, |index| -> Result<TrialRecord> {
            let trial_seed = derive_seed(seed, index as u64);
            let r = sample_r(space, &mut SeededRng::stream(trial_seed, 1));
            let (result, spent) = self.run_at(r, mu, space, trial_seed)?;
            let diverged_at = result.diverged_at;
            Ok(TrialRecord {
                index,
                r,
                eta: result.config.eta,
                steps: result.config.steps,
                sigma: result.config.sigma,
                mu: spent,
                train_accuracy: if diverged_at.is_some() {
                    None
                } else {
                    Some(result.train_accuracy)
                },
                diverged_at,
            })
        });
        let trials = trials.into_iter().collect::<Result<Vec<_>>>()?;
        SweepResult::from_trials(mu, trials)
    }

    fn full_run(&self, r: f64, mu: GdpBudget, space: &SearchSpace, seed: u64) -> Result<RunResult> {
        Ok(self.run_at(r, mu, space, seed)?.0)
    }

    fn full_runs(
        &self,
        rs: &[f64],
        mu: GdpBudget,
        space: &SearchSpace,
        seed: u64,
    ) -> Result<Vec<RunResult>> {
        self.exec
            .map(rs.len(), |i| self.full_run(rs[i], mu, space, seed))
            .into_iter()
            .collect()
    }
}

/// `n` trials at guarantee `mu` on `data`, scored by training accuracy.
pub fn sweep(
    data: &Dataset,
    mu: GdpBudget,
    n: usize,
    space: &SearchSpace,
    seed: u64,
) -> Result<SweepResult> {
    let trainer = DpGdTrainer::new(data, data);
    TrainerBackend::new(&trainer).sweep(mu, n, space, seed)
}

/// Outcome of the adaptive search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoReport {
    pub plan: HpoBudgetPlan,
    pub space: SearchSpace,
    pub sweeps: Vec<SweepResult>,
    pub fit: ScalingFit,
    /// Fit evaluated at `mu_f` before clamping.
    pub r_extrapolated: f64,
    pub r_star: f64,
    pub final_run: RunResult,
    /// Guarantee of every run executed, sweeps first.
    pub spent: Vec<GdpBudget>,
    pub composed_mu: GdpBudget,
    pub composed_epsilon: f64,
    pub warnings: Vec<String>,
}

/// Sweeps at every stage budget of `plan`, fits `r(mu)` with a polynomial of
/// `degree`, and trains the final run at the extrapolated `r` with `mu_f`.
pub fn run_adaptive_hpo_with<B: HpoBackend>(
    backend: &B,
    plan: &HpoBudgetPlan,
    space: &SearchSpace,
    degree: usize,
    seed: u64,
) -> Result<HpoReport> {
    if degree + 1 > plan.stages.len() {
        return Err(Error::invalid(format!(
            "a degree {degree} fit needs {} sweep stages, the plan has {}",
            degree + 1,
            plan.stages.len()
        )));
    }
    let mut sweeps = Vec::with_capacity(plan.stages.len());
    for (i, &mu) in plan.stages.iter().enumerate() {
        sweeps.push(backend.sweep(mu, plan.n, space, stage_seed(seed, i))?);
    }
    let points: Vec<(f64, f64)> = sweeps.iter().map(|s| (s.mu.mu(), s.best_r)).collect();
    let fit = fit_scaling(&points, degree)?;

    let mut warnings = Vec::new();
    let r_extrapolated = fit.evaluate(plan.mu_f.mu());
    let r_star = if r_extrapolated.is_finite() {
        space.clamp_r(r_extrapolated)
    } else {
        space.r_max()
    };
    if r_star != r_extrapolated {
        warnings.push(format!(
            "extrapolated r = {r_extrapolated} outside [{}, {}], clamped to {r_star}",
            space.r_min(),
            space.r_max()
        ));
    }

    let final_run = backend.full_run(r_star, plan.mu_f, space, full_run_seed(seed))?;
    if let Some(step) = final_run.diverged_at {
        warnings.push(format!(
            "final run diverged at step {step}; reporting the zero model"
        ));
    }

    let mut spent: Vec<GdpBudget> = sweeps
        .iter()
        .flat_map(|s| s.trials.iter().map(|t| t.mu))
        .collect();
    spent.push(final_run.mu.unwrap_or(plan.mu_f));
    let composed_mu = compose_gdp(&spent)?;
    let composed_epsilon = gdp_to_epsilon(composed_mu, plan.total.delta())?;

    Ok(HpoReport {
        plan: plan.clone(),
        space: *space,
        sweeps,
        fit,
        r_extrapolated,
        r_star,
        final_run,
        spent,
        composed_mu,
        composed_epsilon,
        warnings,
    })
}

/// [`run_adaptive_hpo_with`] using DP-GD on `train`, reporting test accuracy
/// on `test`.
pub fn run_adaptive_hpo<E: Executor>(
    train: &Dataset,
    test: &Dataset,
    plan: &HpoBudgetPlan,
    space: &SearchSpace,
    degree: usize,
    seed: u64,
    exec: &E,
) -> Result<HpoReport> {
    let trainer = DpGdTrainer::new(train, test);
    run_adaptive_hpo_with(
        &TrainerBackend::with_executor(&trainer, exec),
        plan,
        space,
        degree,
        seed,
    )
}
