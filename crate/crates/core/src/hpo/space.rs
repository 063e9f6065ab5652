use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use crate::{Error, Result};

/// Relative slack allowed between `eta * T` and the requested `r`.
pub const PRODUCT_TOLERANCE: f64 = 0.10;

/// Box of learning rates and step counts; `r` ranges over
/// `[eta_min * t_min, eta_max * t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub eta_min: f64,
    pub eta_max: f64,
    pub t_min: u64,
    pub t_max: u64,
}

impl SearchSpace {
    /// A degenerate space (`eta_min = eta_max`, `t_min = t_max`) is allowed;
    /// it pins `r` to a single value.
    pub fn new(eta_min: f64, eta_max: f64, t_min: u64, t_max: u64) -> Result<Self> {
        if !(eta_min > 0.0 && eta_max.is_finite() && eta_min <= eta_max) {
            return Err(Error::invalid(format!(
                "learning-rate range [{eta_min}, {eta_max}] is not a positive interval"
            )));
        }
        if t_min == 0 || t_min > t_max {
            return Err(Error::invalid(format!(
                "step range [{t_min}, {t_max}] is not a positive interval"
            )));
        }
        Ok(Self {
            eta_min,
            eta_max,
            t_min,
            t_max,
        })
    }

    pub fn r_min(&self) -> f64 {
        self.eta_min * self.t_min as f64
    }

    pub fn r_max(&self) -> f64 {
        self.eta_max * self.t_max as f64
    }

    pub fn clamp_r(&self, r: f64) -> f64 {
        r.clamp(self.r_min(), self.r_max())
    }

    /// `points` log-spaced values from `r_min` to `r_max` inclusive.
    pub fn log_grid(&self, points: usize) -> Vec<f64> {
        let (lo, hi) = (libm::log(self.r_min()), libm::log(self.r_max()));
        match points {
            0 => Vec::new(),
            1 => alloc::vec![self.r_min()],
            _ => (0..points)
                .map(|i| {
                    if i == points - 1 {
                        self.r_max()
                    } else if i == 0 {
                        self.r_min()
                    } else {
                        libm::exp(lo + (hi - lo) * i as f64 / (points - 1) as f64)
                    }
                })
                .collect(),
        }
    }
}

/// Draws `r` log-uniformly from `[r_min, r_max]`.
pub fn sample_r(space: &SearchSpace, rng: &mut SeededRng) -> f64 {
    let (lo, hi) = (space.r_min(), space.r_max());
    if lo >= hi {
        return lo;
    }
    let (llo, lhi) = (libm::log(lo), libm::log(hi));
    libm::exp(rng.uniform_in(llo, lhi)).clamp(lo, hi)
}

/// Splits `r` into a learning rate and step count inside the space.
///
/// `T` is drawn uniformly among the step counts for which `r / T` is an
/// admissible learning rate and `eta = r / T`; this is exactly the
/// distribution of rejection-sampling `T` until the product fits. When no
/// integer `T` admits an exact split, the step count whose clamped product
/// lands closest to `r` is used.
pub fn decompose_r(r: f64, space: &SearchSpace, rng: &mut SeededRng) -> Result<(f64, u64)> {
    let (r_min, r_max) = (space.r_min(), space.r_max());
    let slack = 1e-12;
    if !(r.is_finite() && r >= r_min * (1.0 - slack) && r <= r_max * (1.0 + slack)) {
        return Err(Error::InfeasibleR {
            r,
            min: r_min,
            max: r_max,
        });
    }
    let r = r.clamp(r_min, r_max);
    let lo = libm::ceil(r / space.eta_max - 1e-9).max(space.t_min as f64);
    let hi = libm::floor(r / space.eta_min + 1e-9).min(space.t_max as f64);
    let split = |t: u64| ((r / t as f64).clamp(space.eta_min, space.eta_max), t);
    if lo <= hi {
        let t = rng.below_inclusive(lo as u64, hi as u64);
        return Ok(split(t));
    }
    let best = (space.t_min..=space.t_max)
        .min_by(|&a, &b| {
            let err = |t: u64| libm::fabs(split(t).0 * t as f64 - r);
            err(a).total_cmp(&err(b))
        })
        .expect("non-empty step range");
    Ok(split(best))
}
