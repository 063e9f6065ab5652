//! Random search, the grid oracle and the adaptive search over a seed list.

use linscale_core::accounting::{compose_gdp, DpBudget, GdpBudget};
use linscale_core::hpo::{rerr, ComparisonRow};
use serde::Serialize;

use crate::error::Result;

/// Outcome of one seed; `error` is set when any method failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub random: Option<f64>,
    pub oracle: Option<f64>,
    pub hpo: Option<f64>,
    pub rerr: Option<f64>,
    pub random_r: Option<f64>,
    pub oracle_r: Option<f64>,
    pub r_star: Option<f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    /// Every DP run executed for this seed: random, grid, sweeps, final.
    #[serde(skip)]
    pub runs: Vec<GdpBudget>,
}

impl SeedOutcome {
    pub fn from_row(row: &ComparisonRow) -> Self {
        let mut runs = vec![row.random.mu.expect("random run carries its guarantee")];
        runs.extend(std::iter::repeat_n(runs[0], row.oracle.trials.len()));
        runs.extend(row.adaptive.spent.iter().copied());
        let r_of = |c: &linscale_core::optimizer::TrainConfig| c.eta * c.steps as f64;
        Self {
            seed: row.seed,
            random: Some(row.random.test_accuracy),
            oracle: Some(row.oracle.best.test_accuracy),
            hpo: Some(row.adaptive.final_run.test_accuracy),
            rerr: row.rerr,
            random_r: Some(r_of(&row.random.config)),
            oracle_r: Some(row.oracle.best_r),
            r_star: Some(row.adaptive.r_star),
            warnings: row.adaptive.warnings.clone(),
            error: None,
            runs,
        }
    }

    pub fn failed(seed: u64, error: String) -> Self {
        Self {
            seed,
            random: None,
            oracle: None,
            hpo: None,
            rerr: None,
            random_r: None,
            oracle_r: None,
            r_star: None,
            warnings: Vec::new(),
            error: Some(error),
            runs: Vec::new(),
        }
    }
}

/// Table of per-seed outcomes and their means at one total budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    #[serde(skip)]
    pub total: DpBudget,
    pub rows: Vec<SeedOutcome>,
    /// Means over the seeds that completed.
    pub random: Option<f64>,
    pub oracle: Option<f64>,
    pub hpo: Option<f64>,
    /// RERR of the mean accuracies.
    pub rerr: Option<f64>,
    pub completed: usize,
}

impl Comparison {
    pub fn runs(&self) -> Vec<GdpBudget> {
        self.rows
            .iter()
            .flat_map(|r| r.runs.iter().copied())
            .collect()
    }

    pub fn composed(&self) -> Result<Option<GdpBudget>> {
        let runs = self.runs();
        if runs.is_empty() {
            return Ok(None);
        }
        Ok(Some(compose_gdp(&runs)?))
    }
}

/// Runs `one_seed` on every seed; failures are recorded in the row and
/// excluded from the means.
pub fn run_compare<F>(total: DpBudget, seeds: &[u64], mut one_seed: F) -> Comparison
where
    F: FnMut(u64) -> Result<ComparisonRow>,
{
    let rows: Vec<SeedOutcome> = seeds
        .iter()
        .map(|&seed| match one_seed(seed) {
            Ok(row) => SeedOutcome::from_row(&row),
            Err(e) => SeedOutcome::failed(seed, e.to_string()),
        })
        .collect();
    summarize(total, rows)
}

pub fn summarize(total: DpBudget, rows: Vec<SeedOutcome>) -> Comparison {
    let done: Vec<&SeedOutcome> = rows.iter().filter(|r| r.error.is_none()).collect();
    let mean = |f: fn(&SeedOutcome) -> Option<f64>| -> Option<f64> {
        if done.is_empty() {
            return None;
        }
        Some(done.iter().map(|r| f(r).unwrap_or(0.0)).sum::<f64>() / done.len() as f64)
    };
    let random = mean(|r| r.random);
    let oracle = mean(|r| r.oracle);
    let hpo = mean(|r| r.hpo);
    let rerr = match (hpo, random, oracle) {
        (Some(h), Some(r), Some(o)) => rerr(h, r, o).ok(),
        _ => None,
    };
    let completed = done.len();
    Comparison {
        total,
        rows,
        random,
        oracle,
        hpo,
        rerr,
        completed,
    }
}
