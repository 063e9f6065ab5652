//! Experiment configuration: one flat TOML table.
//!
//! Every key is optional; missing keys take the defaults below, which
//! describe the synthetic blob benchmark. Command-line flags override the
//! file. Unknown keys are rejected.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `data`, `test_data` | unset | CSV files (label first); without `data` blobs are generated, without `test_data` the training set is reused |
//! | `header` | `false` | CSV files start with a header row |
//! | `classes`, `dim`, `samples` | 10, 64, 5000 | blob shape |
//! | `separation`, `noise`, `spread`, `split` | 3, 0.5, 100, 0.8 | blob geometry, see [`BlobSpec`] |
//! | `data_seed` | seed | blob seed; defaults to the experiment seed |
//! | `epsilon`, `delta` | 1, 1e-5 | total budget |
//! | `epsilons` | `[]` | extra totals swept by `compare` |
//! | `eps1`, `eps2`, `eps3` | 0.1, 0.2, unset | sweep budgets; `eps3` adds a third stage |
//! | `runs_per_sweep` | 3 | trials per sweep |
//! | `eta_min`, `eta_max`, `t_min`, `t_max` | 0.1, 2, 20, 100 | search space |
//! | `degree` | 1 | polynomial degree of the scaling fit |
//! | `grid_points` | 10 | log-spaced grid of the oracle |
//! | `seed`, `seeds` | 0, 5 | base seed; `compare` runs `seed .. seed + seeds` |
//! | `workers` | 1 | worker threads (not part of the config hash) |
//! | `out` | unset | result file; stdout when unset (not hashed) |
//! | `momentum`, `free_step`, `clip_norm` | 0.9, true, 1 | optimizer |
//! | `eta`, `steps`, `mu`, `sigma` | 1, 50, unset, unset | single runs (`train`, `calibrate`, `sweep`) |
//! | `radius_*` | d=10, alpha=beta=1, eta=0.5, sigma=0.1, T=50, 1000 trials | noisy-radius experiment |
//! | `probe_dim`, `probe_classes`, `probes` | 8, 4, 100000 | Hessian probe |

use std::path::{Path, PathBuf};

use linscale_core::accounting::{plan_budget_stages, DpBudget, HpoBudgetPlan};
use linscale_core::hpo::SearchSpace;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::BlobSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub header: bool,

    pub classes: usize,
    pub dim: usize,
    pub samples: usize,
    pub separation: f64,
    pub noise: f64,
    pub spread: f64,
    pub split: f64,
    pub data_seed: Option<u64>,

    pub epsilon: f64,
    pub delta: f64,
    pub epsilons: Vec<f64>,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: Option<f64>,
    pub runs_per_sweep: usize,

    pub eta_min: f64,
    pub eta_max: f64,
    pub t_min: u64,
    pub t_max: u64,
    pub degree: usize,
    pub grid_points: usize,

    pub seed: u64,
    pub seeds: usize,
    pub workers: usize,
    pub out: Option<PathBuf>,

    pub momentum: f64,
    pub free_step: bool,
    pub clip_norm: f64,

    pub eta: f64,
    pub steps: u64,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,

    pub radius_dim: usize,
    pub radius_alpha: f64,
    pub radius_beta: f64,
    pub radius_eta: f64,
    pub radius_sigma: f64,
    pub radius_steps: u64,
    pub radius_trials: usize,

    pub probe_dim: usize,
    pub probe_classes: usize,
    pub probes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            test_data: None,
            header: false,
            classes: 10,
            dim: 64,
            samples: 5000,
            separation: 3.0,
            noise: 0.5,
            spread: 100.0,
            split: 0.8,
            data_seed: None,
            epsilon: 1.0,
            delta: 1e-5,
            epsilons: Vec::new(),
            eps1: 0.1,
            eps2: 0.2,
            eps3: None,
            runs_per_sweep: linscale_core::hpo::DEFAULT_RUNS_PER_SWEEP,
            eta_min: 0.1,
            eta_max: 2.0,
            t_min: 20,
            t_max: 100,
            degree: 1,
            grid_points: 10,
            seed: 0,
            seeds: 5,
            workers: 1,
            out: None,
            momentum: 0.9,
            free_step: true,
            clip_norm: 1.0,
            eta: 1.0,
            steps: 50,
            mu: None,
            sigma: None,
            radius_dim: 10,
            radius_alpha: 1.0,
            radius_beta: 1.0,
            radius_eta: 0.5,
            radius_sigma: 0.1,
            radius_steps: 50,
            radius_trials: 1000,
            probe_dim: 8,
            probe_classes: 4,
            probes: 100_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 over the canonical JSON form of every setting that can change
    /// results; `workers` and `out` are excluded.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("workers");
            map.remove("out");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn total(&self) -> Result<DpBudget> {
        Ok(DpBudget::new(self.epsilon, self.delta)?)
    }

    pub fn totals(&self) -> Result<Vec<DpBudget>> {
        let mut eps = vec![self.epsilon];
        eps.extend(self.epsilons.iter().copied().filter(|&e| e != self.epsilon));
        eps.into_iter()
            .map(|e| Ok(DpBudget::new(e, self.delta)?))
            .collect()
    }

    pub fn stage_epsilons(&self) -> Vec<f64> {
        let mut eps = vec![self.eps1, self.eps2];
        eps.extend(self.eps3);
        eps
    }

    pub fn plan_for(&self, total: DpBudget) -> Result<HpoBudgetPlan> {
        Ok(plan_budget_stages(
            total,
            &self.stage_epsilons(),
            self.runs_per_sweep,
        )?)
    }

    pub fn plan(&self) -> Result<HpoBudgetPlan> {
        self.plan_for(self.total()?)
    }

    pub fn space(&self) -> Result<SearchSpace> {
        Ok(SearchSpace::new(
            self.eta_min,
            self.eta_max,
            self.t_min,
            self.t_max,
        )?)
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        if self.grid_points == 0 {
            return Err(Error::Config("grid_points must be at least 1".into()));
        }
        Ok(self.space()?.log_grid(self.grid_points))
    }

    pub fn blob_spec(&self, seed: u64) -> BlobSpec {
        BlobSpec {
            classes: self.classes,
            dim: self.dim,
            samples: self.samples,
            separation: self.separation,
            noise: self.noise,
            spread: self.spread,
            seed: self.data_seed.unwrap_or(seed),
            split: self.split,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }

    /// Checks everything that does not depend on the command being run.
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if self.degree + 1 > self.stage_epsilons().len() {
            return Err(Error::Config(format!(
                "a degree {} fit needs {} sweep stages; set eps3 for a third",
                self.degree,
                self.degree + 1
            )));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::Config(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            )));
        }
        self.total()?;
        self.space()?;
        if self.data.is_none() {
            self.blob_spec(self.seed).validate()?;
        }
        Ok(())
    }
}
