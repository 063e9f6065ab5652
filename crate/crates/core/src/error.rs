use alloc::string::String;
use alloc::vec::Vec;

use crate::hpo::TrialRecord;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No GDP parameter inside the search bracket reaches the requested
    /// `(epsilon, delta)` target.
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    /// The sweep stages alone consume the whole budget.
    #[error("insufficient budget: {0}")]
    InsufficientBudget(String),

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("step size {eta} outside (0, {limit})")]
    InvalidStepSize { eta: f64, limit: f64 },

    #[error("r = {r} outside the feasible range [{min}, {max}]")]
    InfeasibleR { r: f64, min: f64, max: f64 },

    #[error("all {} sweep trials diverged", trials.len())]
    SweepFailed { trials: Vec<TrialRecord> },

    #[error("RERR undefined: oracle {oracle} does not exceed random {random}")]
    UndefinedMetric { random: f64, oracle: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
