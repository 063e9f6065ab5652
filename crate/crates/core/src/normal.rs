//! Standard normal distribution helpers.
//!
//! The CDF goes through `erfc`, which keeps full relative precision deep in
//! the lower tail where `1 - erf` would cancel to zero.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_and_centered() {
        assert_eq!(cdf(0.0), 0.5);
        for &x in &[0.1, 1.0, 3.0, 7.5] {
            assert!((cdf(x) + cdf(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn lower_tail_keeps_relative_precision() {
        // Phi(-10) = 7.619853024160526e-24 (50-digit reference)
        let reference = 7.619_853_024_160_526_6e-24;
        assert!((cdf(-10.0) / reference - 1.0).abs() < 1e-14);
        // Phi(-20) = 2.7536241186062336e-89
        let reference = 2.753_624_118_606_233_6e-89;
        assert!((cdf(-20.0) / reference - 1.0).abs() < 1e-13);
    }
}
