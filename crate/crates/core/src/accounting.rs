//! Gaussian differential privacy accounting.
//!
//! A full-batch run of `T` Gaussian-noised steps with sensitivity 1 and noise
//! multiplier `sigma` is exactly `sqrt(T) / sigma`-GDP. GDP composes as the
//! root sum of squares and converts to `(epsilon, delta)`-DP through
//!
//! ```text
//! delta(eps) = Phi(-eps/mu + mu/2) - e^eps * Phi(-eps/mu - mu/2)
//! ```
//!
//! which is strictly decreasing in `eps` and strictly increasing in `mu`, so
//! both inverses are found by bisection.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::normal;
use crate::{Error, Result};

/// Lower end of the bracket searched for a GDP parameter.
pub const MU_BRACKET_LO: f64 = 1e-8;
/// Upper end of the bracket searched for a GDP parameter.
pub const MU_BRACKET_HI: f64 = 100.0;
/// Absolute tolerance on `delta` accepted by [`dp_to_gdp`].
pub const DELTA_TOLERANCE: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

/// A `mu`-GDP guarantee.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GdpBudget(f64);

impl GdpBudget {
    pub fn new(mu: f64) -> Result<Self> {
        if mu > 0.0 && mu.is_finite() {
            Ok(Self(mu))
        } else {
            Err(Error::invalid(format!(
                "GDP parameter must be positive and finite, got {mu}"
            )))
        }
    }

    pub fn mu(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GdpBudget {
    type Error = Error;

    fn try_from(mu: f64) -> Result<Self> {
        Self::new(mu)
    }
}

impl From<GdpBudget> for f64 {
    fn from(b: GdpBudget) -> f64 {
        b.0
    }
}

/// An `(epsilon, delta)`-DP guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpBudget {
    epsilon: f64,
    delta: f64,
}

impl DpBudget {
    /// `delta` must lie strictly inside `(0, 1)`; the endpoints are rejected
    /// rather than treated as limits.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(self) -> f64 {
        self.epsilon
    }

    pub fn delta(self) -> f64 {
        self.delta
    }
}

/// GDP guarantee of `steps` full-batch Gaussian steps at noise multiplier
/// `sigma`: `sqrt(steps) / sigma`.
pub fn gdp_of_run(sigma: f64, steps: u64) -> Result<GdpBudget> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "noise multiplier must be positive, got {sigma}"
        )));
    }
    if steps == 0 {
        return Err(Error::invalid("a run needs at least one step"));
    }
    GdpBudget::new(libm::sqrt(steps as f64) / sigma)
}

/// Composition of GDP mechanisms: `sqrt(sum mu_i^2)`.
pub fn compose_gdp(budgets: &[GdpBudget]) -> Result<GdpBudget> {
    if budgets.is_empty() {
        return Err(Error::invalid("cannot compose an empty list of budgets"));
    }
    if let [single] = budgets {
        return Ok(*single);
    }
    // Scale by the maximum so very small or very large parameters do not
    // under/overflow when squared. Sorting makes the sum order independent
    // of the input permutation.
    let mut mus: Vec<f64> = budgets.iter().map(|b| b.0).collect();
    mus.sort_by(f64::total_cmp);
    let max = mus[mus.len() - 1];
    let sum: f64 = mus.iter().map(|&m| (m / max) * (m / max)).sum();
    GdpBudget::new(max * libm::sqrt(sum))
}

/// `delta` achieved at `epsilon` by a `mu`-GDP mechanism.
///
/// Clamped into `[0, 1)`; results that underflow come back as zero.
pub fn gdp_to_dp(mu: GdpBudget, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    Ok(delta_of(mu.0, epsilon))
}

fn delta_of(mu: f64, epsilon: f64) -> f64 {
    let a = -epsilon / mu + 0.5 * mu;
    let b = -epsilon / mu - 0.5 * mu;
    let lead = normal::cdf(a);
    let tail = normal::cdf(b);
    let delta = if tail == 0.0 {
        lead
    } else {
        lead - libm::exp(epsilon) * tail
    };
    delta.clamp(0.0, 1.0 - f64::EPSILON / 2.0)
}

/// Smallest `mu` in `[MU_BRACKET_LO, MU_BRACKET_HI]` whose `delta` at
/// `target.epsilon` reaches `target.delta`.
///
/// The returned value is the lower end of the final bisection bracket, so
/// `gdp_to_dp(result, eps) <= target.delta` always holds.
pub fn dp_to_gdp(target: DpBudget) -> Result<GdpBudget> {
    let eps = target.epsilon;
    let goal = target.delta;
    let (mut lo, mut hi) = (MU_BRACKET_LO, MU_BRACKET_HI);
    if delta_of(lo, eps) > goal || delta_of(hi, eps) < goal {
        return Err(Error::InfeasibleBudget(format!(
            "no mu in [{lo}, {hi}] gives delta = {goal} at epsilon = {eps}"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delta_of(mid, eps) <= goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved = delta_of(lo, eps);
    if (achieved - goal).abs() > DELTA_TOLERANCE {
        return Err(Error::InfeasibleBudget(format!(
            "bisection stalled at delta = {achieved}, target {goal}"
        )));
    }
    GdpBudget::new(lo)
}

/// Smallest `epsilon >= 0` at which a `mu`-GDP mechanism is
/// `(epsilon, delta)`-DP. Returns the upper end of the final bracket, so the
/// reported `epsilon` is never optimistic.
pub fn gdp_to_epsilon(mu: GdpBudget, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if delta_of(mu.0, 0.0) <= delta {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while delta_of(mu.0, hi) > delta {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e6 {
            return Err(Error::InfeasibleBudget(format!(
                "no finite epsilon reaches delta = {delta} for mu = {}",
                mu.0
            )));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delta_of(mu.0, mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Noise multiplier giving a `steps`-step run exactly `mu`-GDP.
pub fn calibrate_sigma(mu: GdpBudget, steps: u64) -> Result<f64> {
    if steps == 0 {
        return Err(Error::invalid("a run needs at least one step"));
    }
    Ok(libm::sqrt(steps as f64) / mu.0)
}

/// Boundary between the training/search code and the privacy analysis.
///
/// [`GaussianDp`] is exact for full-batch Gaussian mechanisms; other
/// analyses (for example a numerical privacy-loss-distribution accountant
/// for subsampled runs) can be slotted in behind this trait.
pub trait Accountant: Sync {
    /// Noise multiplier that makes a `steps`-step run `mu`-GDP.
    fn calibrate(&self, mu: GdpBudget, steps: u64) -> Result<f64>;

    /// Guarantee actually spent by a run.
    fn spent(&self, sigma: f64, steps: u64) -> Result<GdpBudget>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianDp;

impl Accountant for GaussianDp {
    fn calibrate(&self, mu: GdpBudget, steps: u64) -> Result<f64> {
        calibrate_sigma(mu, steps)
    }

    fn spent(&self, sigma: f64, steps: u64) -> Result<GdpBudget> {
        gdp_of_run(sigma, steps)
    }
}

/// Budget split for a search with one or more sweep stages of `n` runs
/// each, followed by a single final run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoBudgetPlan {
    /// Per-run guarantee of each sweep stage, in stage order.
    pub stages: Vec<GdpBudget>,
    /// The `epsilon` each stage was specified with (at `total.delta`).
    pub stage_epsilons: Vec<f64>,
    pub mu_f: GdpBudget,
    /// `epsilon` of the final run alone at `total.delta`.
    pub eps_f: f64,
    pub n: usize,
    pub total: DpBudget,
}

impl HpoBudgetPlan {
    pub fn mu1(&self) -> GdpBudget {
        self.stages[0]
    }

    pub fn mu2(&self) -> Option<GdpBudget> {
        self.stages.get(1).copied()
    }

    /// Every run the plan pays for: `n` per stage, then the final run.
    pub fn runs(&self) -> Vec<GdpBudget> {
        let mut runs = Vec::with_capacity(self.stages.len() * self.n + 1);
        for &mu in &self.stages {
            runs.extend(core::iter::repeat_n(mu, self.n));
        }
        runs.push(self.mu_f);
        runs
    }

    pub fn composed(&self) -> GdpBudget {
        compose_gdp(&self.runs()).expect("a plan always has a final run")
    }

    /// `epsilon` of the whole plan at `total.delta`.
    pub fn composed_epsilon(&self) -> Result<f64> {
        gdp_to_epsilon(self.composed(), self.total.delta)
    }
}

/// Two-stage plan: `n` runs at `eps1`, `n` at `eps2`, the rest for the
/// final run. Sub-run budgets are converted at `total.delta`.
pub fn plan_budget(total: DpBudget, eps1: f64, eps2: f64, n: usize) -> Result<HpoBudgetPlan> {
    plan_budget_stages(total, &[eps1, eps2], n)
}

/// Plan with an arbitrary number of sweep stages (one per extrapolation
/// point).
pub fn plan_budget_stages(total: DpBudget, stage_eps: &[f64], n: usize) -> Result<HpoBudgetPlan> {
    if n == 0 {
        return Err(Error::invalid("runs per sweep must be at least 1"));
    }
    if stage_eps.is_empty() {
        return Err(Error::invalid("at least one sweep stage is required"));
    }
    for w in stage_eps.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::invalid(format!(
                "sweep epsilons must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    for &eps in stage_eps {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!(
                "sweep epsilon must be positive, got {eps}"
            )));
        }
        if eps >= total.epsilon {
            return Err(Error::InsufficientBudget(format!(
                "a sweep run at epsilon = {eps} already meets the total epsilon = {}",
                total.epsilon
            )));
        }
    }
    let stages = stage_eps
        .iter()
        .map(|&eps| dp_to_gdp(DpBudget::new(eps, total.delta)?))
        .collect::<Result<Vec<_>>>()?;
    let mu_total = dp_to_gdp(total)?.0;

    // Scaled by mu_total to stay well inside the f64 range.
    let swept: f64 = stages
        .iter()
        .map(|s| (s.0 / mu_total) * (s.0 / mu_total))
        .sum::<f64>()
        * n as f64;
    let remaining = 1.0 - swept;
    if !(remaining > 0.0) {
        return Err(Error::InsufficientBudget(format!(
            "sweeps alone compose to mu = {} which exceeds the total mu = {mu_total}",
            mu_total * libm::sqrt(swept)
        )));
    }
    let mut mu_f = mu_total * libm::sqrt(remaining);
    let mut plan = HpoBudgetPlan {
        stages,
        stage_epsilons: stage_eps.to_vec(),
        mu_f: GdpBudget::new(mu_f)?,
        eps_f: 0.0,
        n,
        total,
    };
    // Rounding in the square roots may leave the composition a few ulps
    // above the target, and delta is not monotone at ulp scale; step mu_f
    // down until both checks hold.
    while plan.composed().0 > mu_total || delta_of(plan.composed().0, total.epsilon) > total.delta {
        mu_f = mu_f.next_down();
        plan.mu_f = GdpBudget::new(mu_f)?;
    }
    plan.eps_f = gdp_to_epsilon(plan.mu_f, total.delta)?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gdp(mu: f64) -> GdpBudget {
        GdpBudget::new(mu).unwrap()
    }

    #[test]
    fn run_budget_examples() {
        assert_eq!(gdp_of_run(1.0, 1).unwrap().mu(), 1.0);
        assert_eq!(gdp_of_run(2.0, 4).unwrap().mu(), 1.0);
        let mu = gdp_of_run(2561.0, 100).unwrap().mu();
        assert!((mu - 10.0 / 2561.0).abs() < 1e-18);
        assert!((mu - 0.0039047).abs() < 1e-7);
    }

    #[test]
    fn run_budget_rejects_bad_inputs() {
        assert!(matches!(gdp_of_run(0.0, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            gdp_of_run(-1.0, 3),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(gdp_of_run(1.0, 0), Err(Error::InvalidArgument(_))));
        assert!(GdpBudget::new(0.0).is_err());
        assert!(GdpBudget::new(f64::INFINITY).is_err());
    }

    #[test]
    fn composition_examples() {
        assert_eq!(compose_gdp(&[gdp(1.0)]).unwrap().mu(), 1.0);
        let two = compose_gdp(&[gdp(1.0), gdp(1.0)]).unwrap().mu();
        assert!((two - core::f64::consts::SQRT_2).abs() < 1e-15);
        let mu = 0.37;
        let three = compose_gdp(&[gdp(mu), gdp(mu), gdp(mu)]).unwrap().mu();
        assert!((three - mu * libm::sqrt(3.0)).abs() < 1e-15);
        assert!(compose_gdp(&[]).is_err());
    }

    #[test]
    fn dp_budget_rejects_degenerate_delta() {
        assert!(DpBudget::new(1.0, 0.0).is_err());
        assert!(DpBudget::new(1.0, 1.0).is_err());
        assert!(DpBudget::new(-0.1, 0.5).is_err());
        assert!(DpBudget::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn vanishing_mu_gives_vanishing_delta() {
        let d = gdp_to_dp(gdp(1e-3), 1.0).unwrap();
        assert_eq!(d, 0.0);
        assert!(gdp_to_dp(gdp(1.0), -1.0).is_err());
    }

    #[test]
    fn calibration_inverts_run_budget() {
        assert_eq!(calibrate_sigma(gdp(1.0), 1).unwrap(), 1.0);
        assert_eq!(calibrate_sigma(gdp(1.0), 100).unwrap(), 10.0);
        let sigma = calibrate_sigma(gdp(0.2680511232112942), 37).unwrap();
        let back = gdp_of_run(sigma, 37).unwrap().mu();
        assert!((back - 0.2680511232112942).abs() < 1e-15);
    }

    #[test]
    fn infeasible_targets_are_reported() {
        // delta below what mu = 1e-8 already leaks at epsilon = 0
        let target = DpBudget::new(0.0, 1e-10).unwrap();
        assert!(matches!(dp_to_gdp(target), Err(Error::InfeasibleBudget(_))));
    }

    #[test]
    fn epsilon_zero_when_delta_already_met() {
        let d = gdp_to_dp(gdp(0.5), 0.0).unwrap();
        assert_eq!(gdp_to_epsilon(gdp(0.5), d * 1.01).unwrap(), 0.0);
    }

    #[test]
    fn plan_rejects_sweeps_exceeding_total() {
        let total = DpBudget::new(0.15, 1e-5).unwrap();
        assert!(matches!(
            plan_budget(total, 0.1, 0.2, 3),
            Err(Error::InsufficientBudget(_))
        ));
        // each stage below the total but many runs exhaust it
        let total = DpBudget::new(1.0, 1e-5).unwrap();
        assert!(matches!(
            plan_budget(total, 0.5, 0.6, 10),
            Err(Error::InsufficientBudget(_))
        ));
    }

    #[test]
    fn plan_rejects_malformed_stages() {
        let total = DpBudget::new(1.0, 1e-5).unwrap();
        assert!(matches!(
            plan_budget(total, 0.2, 0.1, 3),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            plan_budget(total, 0.1, 0.2, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            plan_budget(total, 0.0, 0.2, 3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn plan_runs_layout() {
        let total = DpBudget::new(1.0, 1e-5).unwrap();
        let plan = plan_budget(total, 0.1, 0.2, 3).unwrap();
        let runs = plan.runs();
        assert_eq!(runs.len(), 7);
        assert_eq!(runs[0], plan.mu1());
        assert_eq!(runs[3], plan.mu2().unwrap());
        assert_eq!(runs[6], plan.mu_f);
    }
}
