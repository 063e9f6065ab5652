//! Reference points for the adaptive search: a single random draw at the
//! full budget, and a grid "oracle" that spends the full budget on every
//! grid point and selects on test accuracy without charging for it.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    full_run_seed, random_draw_seed, run_adaptive_hpo_with, sample_r, DpGdTrainer, HpoBackend,
    HpoReport, SearchSpace, TrainerBackend,
};
use crate::accounting::{dp_to_gdp, DpBudget, GdpBudget, HpoBudgetPlan};
use crate::exec::Executor;
use crate::optimizer::{Dataset, RunResult};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// How the reported run was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    /// Chosen by looking at test accuracy; the choice itself is not private.
    #[serde(rename = "non-private-selection")]
    NonPrivate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTrial {
    pub r: f64,
    pub eta: f64,
    pub steps: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub diverged_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best: RunResult,
    pub best_r: f64,
    pub best_index: usize,
    pub trials: Vec<GridTrial>,
    pub selection: Selection,
}

/// One random `r` trained with the whole guarantee `mu`.
pub fn random_search_at<B: HpoBackend>(
    backend: &B,
    mu: GdpBudget,
    space: &SearchSpace,
    seed: u64,
) -> Result<RunResult> {
    let r = sample_r(space, &mut SeededRng::stream(random_draw_seed(seed), 0));
    backend.full_run(r, mu, space, full_run_seed(seed))
}

/// Random search with the whole `total` budget on one run.
pub fn random_search(
    train: &Dataset,
    test: &Dataset,
    total: DpBudget,
    space: &SearchSpace,
    seed: u64,
) -> Result<RunResult> {
    let trainer = DpGdTrainer::new(train, test);
    random_search_at(
        &TrainerBackend::new(&trainer),
        dp_to_gdp(total)?,
        space,
        seed,
    )
}

/// A full-budget run at every grid point; the best by test accuracy wins
/// (earliest on ties).
pub fn grid_search_at<B: HpoBackend>(
    backend: &B,
    mu: GdpBudget,
    grid: &[f64],
    space: &SearchSpace,
    seed: u64,
) -> Result<OracleResult> {
    if grid.is_empty() {
        return Err(Error::invalid("grid search needs at least one grid point"));
    }
    let runs = backend.full_runs(grid, mu, space, full_run_seed(seed))?;
    let mut best_index = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.test_accuracy > runs[best_index].test_accuracy {
            best_index = i;
        }
    }
    let trials = grid
        .iter()
        .zip(&runs)
        .map(|(&r, run)| GridTrial {
            r,
            eta: run.config.eta,
            steps: run.config.steps,
            train_accuracy: run.train_accuracy,
            test_accuracy: run.test_accuracy,
            diverged_at: run.diverged_at,
        })
        .collect();
    let best = runs.into_iter().nth(best_index).expect("index in range");
    Ok(OracleResult {
        best,
        best_r: grid[best_index],
        best_index,
        trials,
        selection: Selection::NonPrivate,
    })
}

pub fn grid_search<E: Executor>(
    train: &Dataset,
    test: &Dataset,
    total: DpBudget,
    grid: &[f64],
    space: &SearchSpace,
    seed: u64,
    exec: &E,
) -> Result<OracleResult> {
    let trainer = DpGdTrainer::new(train, test);
    grid_search_at(
        &TrainerBackend::with_executor(&trainer, exec),
        dp_to_gdp(total)?,
        grid,
        space,
        seed,
    )
}

/// Relative error-rate reduction: the share of the gap between random
/// search and the oracle closed by `ours`, in percent.
pub fn rerr(ours: f64, random: f64, oracle: f64) -> Result<f64> {
    if !(oracle > random) {
        return Err(Error::UndefinedMetric { random, oracle });
    }
    Ok(100.0 * (ours - random) / (oracle - random))
}

/// The three methods on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub random: RunResult,
    pub oracle: OracleResult,
    pub adaptive: HpoReport,
    /// `None` when the oracle does not beat random search on this seed.
    pub rerr: Option<f64>,
}

/// Random search and the grid oracle at the plan's total budget, and the
/// adaptive search under the plan.
pub fn compare_methods<B: HpoBackend>(
    backend: &B,
    plan: &HpoBudgetPlan,
    space: &SearchSpace,
    degree: usize,
    grid: &[f64],
    seed: u64,
) -> Result<ComparisonRow> {
    let mu_total = dp_to_gdp(plan.total)?;
    let random = random_search_at(backend, mu_total, space, seed)?;
    let oracle = grid_search_at(backend, mu_total, grid, space, seed)?;
    let adaptive = run_adaptive_hpo_with(backend, plan, space, degree, seed)?;
    let rerr = rerr(
        adaptive.final_run.test_accuracy,
        random.test_accuracy,
        oracle.best.test_accuracy,
    )
    .ok();
    Ok(ComparisonRow {
        seed,
        random,
        oracle,
        adaptive,
        rerr,
    })
}
