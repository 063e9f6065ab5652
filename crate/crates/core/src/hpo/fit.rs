use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SearchSpace;
use crate::{Error, Result};

/// Polynomial `r(mu)` with coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub degree: usize,
    pub coefficients: Vec<f64>,
}

impl ScalingFit {
    pub fn evaluate(&self, mu: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * mu + c)
    }

    pub fn evaluate_clamped(&self, mu: f64, space: &SearchSpace) -> f64 {
        space.clamp_r(self.evaluate(mu))
    }

    /// Linear term, when the fit has one.
    pub fn slope(&self) -> Option<f64> {
        self.coefficients.get(1).copied()
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }
}

/// Fits `r` as a polynomial of degree `degree` in `mu`.
///
/// With exactly `degree + 1` points the polynomial interpolates them; with
/// more it is the least-squares fit. Solved by Householder QR on the
/// Vandermonde matrix.
pub fn fit_scaling(points: &[(f64, f64)], degree: usize) -> Result<ScalingFit> {
    let m = points.len();
    let cols = degree + 1;
    if m < cols {
        return Err(Error::invalid(format!(
            "degree {degree} needs at least {cols} points, got {m}"
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("fit points must be finite"));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("fit abscissas must be distinct"));
    }

    // Column-major Vandermonde.
    let mut a = vec![0.0; m * cols];
    for (i, &(x, _)) in points.iter().enumerate() {
        let mut p = 1.0;
        for j in 0..cols {
            a[j * m + i] = p;
            p *= x;
        }
    }
    let mut b: Vec<f64> = points.iter().map(|p| p.1).collect();

    for j in 0..cols {
        let col = &mut a[j * m..(j + 1) * m];
        let norm = libm::sqrt(col[j..].iter().map(|v| v * v).sum());
        if norm == 0.0 {
            return Err(Error::invalid("fit design matrix is rank deficient"));
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = col[j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for k in j..cols {
            let ck = &mut a[k * m + j..(k + 1) * m];
            let s = 2.0 * v.iter().zip(ck.iter()).map(|(p, q)| p * q).sum::<f64>() / vnorm2;
            ck.iter_mut().zip(&v).for_each(|(c, vi)| *c -= s * vi);
        }
        let s = 2.0 * v.iter().zip(&b[j..]).map(|(p, q)| p * q).sum::<f64>() / vnorm2;
        b[j..].iter_mut().zip(&v).for_each(|(c, vi)| *c -= s * vi);
    }

    let mut coefficients = vec![0.0; cols];
    for j in (0..cols).rev() {
        let mut s = b[j];
        for k in j + 1..cols {
            s -= a[k * m + j] * coefficients[k];
        }
        coefficients[j] = s / a[j * m + j];
    }
    Ok(ScalingFit {
        degree,
        coefficients,
    })
}
