//! Empirical checks of two analytic facts the scaling rule leans on.
//!
//! * On an `alpha`-strongly convex, `beta`-smooth objective, gradient
//!   descent with step `eta` contracts the distance between two trajectories
//!   by `c = max(|1 - eta*alpha|, |1 - eta*beta|)` per step. Adding Gaussian
//!   noise of expected norm `rho = sqrt(d) * sigma` to every gradient
//!   therefore keeps the noisy iterate within
//!   `rho * eta * (1 - c^T) / (1 - c)` of the clean one, in expectation.
//! * Every second derivative of the softmax cross-entropy with respect to
//!   the weights is bounded by `1/4` in magnitude for features in `[0, 1]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::optimizer::Matrix;
use crate::rng::{derive_seed, SeededRng};
use crate::{Error, Result};

/// `f(w) = 1/2 * sum_j lambda_j (w_j - w*_j)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProblem {
    eigenvalues: Vec<f64>,
    optimum: Vec<f64>,
}

impl QuadraticProblem {
    pub fn new(eigenvalues: Vec<f64>, optimum: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.len() != optimum.len() {
            return Err(Error::invalid(
                "eigenvalues and optimum must be non-empty and equally long",
            ));
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("eigenvalues must be positive and finite"));
        }
        if optimum.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("optimum must be finite"));
        }
        Ok(Self {
            eigenvalues,
            optimum,
        })
    }

    /// Eigenvalues spread evenly over `[alpha, beta]`, optimum drawn from a
    /// standard Gaussian.
    pub fn spread(dim: usize, alpha: f64, beta: f64, seed: u64) -> Result<Self> {
        if dim == 0 || !(alpha > 0.0 && alpha <= beta) {
            return Err(Error::invalid(format!(
                "need dim >= 1 and 0 < alpha <= beta, got {dim}, {alpha}, {beta}"
            )));
        }
        let eigenvalues = (0..dim)
            .map(|j| {
                if dim == 1 {
                    alpha
                } else {
                    alpha + (beta - alpha) * j as f64 / (dim - 1) as f64
                }
            })
            .collect();
        let mut rng = SeededRng::new(seed);
        let optimum = (0..dim).map(|_| rng.gaussian()).collect();
        Self::new(eigenvalues, optimum)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn alpha(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn beta(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        0.5 * self
            .eigenvalues
            .iter()
            .zip(&self.optimum)
            .zip(w)
            .map(|((l, o), x)| l * (x - o) * (x - o))
            .sum::<f64>()
    }

    /// One gradient step `w -= eta * (grad f(w) + noise)`.
    fn step(&self, w: &mut [f64], eta: f64, noise: Option<&[f64]>) {
        for (j, x) in w.iter_mut().enumerate() {
            let mut g = self.eigenvalues[j] * (*x - self.optimum[j]);
            if let Some(n) = noise {
                g += n[j];
            }
            *x -= eta * g;
        }
    }

    /// Clean gradient descent from zero; returns every iterate including the
    /// start.
    pub fn gd_trajectory(&self, eta: f64, steps: u64) -> Vec<Vec<f64>> {
        let mut w = vec![0.0; self.dim()];
        let mut out = Vec::with_capacity(steps as usize + 1);
        out.push(w.clone());
        for _ in 0..steps {
            self.step(&mut w, eta, None);
            out.push(w.clone());
        }
        out
    }
}

/// `max(|1 - eta*alpha|, |1 - eta*beta|)` for `0 < eta < 2 / beta`.
pub fn contraction_factor(alpha: f64, beta: f64, eta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= beta && beta.is_finite()) {
        return Err(Error::invalid(format!(
            "need 0 < alpha <= beta, got {alpha}, {beta}"
        )));
    }
    let limit = 2.0 / beta;
    if !(eta > 0.0 && eta < limit) {
        return Err(Error::InvalidStepSize { eta, limit });
    }
    Ok(libm::fabs(1.0 - eta * alpha).max(libm::fabs(1.0 - eta * beta)))
}

/// `rho * eta * sum_{i<T} c^i`, written as `rho * eta * (1 - c^T) / (1 - c)`
/// and as `rho * eta * T` at `c = 1`.
pub fn radius_bound(noise_norm_rho: f64, eta: f64, c: f64, steps: u64) -> Result<f64> {
    if !(noise_norm_rho >= 0.0 && noise_norm_rho.is_finite()) {
        return Err(Error::invalid(format!(
            "noise norm must be >= 0, got {noise_norm_rho}"
        )));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!(
            "step size must be positive, got {eta}"
        )));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::invalid(format!(
            "contraction factor must lie in [0, 1], got {c}"
        )));
    }
    if steps == 0 {
        return Err(Error::invalid("the bound needs at least one step"));
    }
    let t = steps as f64;
    // 1 - c^T loses all precision as c -> 1; expm1/log1p keep it.
    let sum = if c == 1.0 {
        t
    } else if c == 0.0 {
        1.0
    } else {
        let log_c = libm::log1p(c - 1.0);
        -libm::expm1(t * log_c) / (1.0 - c)
    };
    Ok(noise_norm_rho * eta * sum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub empirical_mean_distance: f64,
    /// Standard error of the mean distance.
    pub standard_error: f64,
    pub bound: f64,
    pub c: f64,
    pub noise_norm_rho: f64,
    pub eta: f64,
    pub sigma: f64,
    pub steps: u64,
    pub trials: usize,
    pub seed: u64,
    /// Final distance of every trial.
    pub distances: Vec<f64>,
    /// Mean distance after each step `1..=steps`.
    pub mean_by_step: Vec<f64>,
}

impl RadiusReport {
    /// Whether the mean distance sits below the bound, allowing `grace`
    /// standard errors of Monte-Carlo slack.
    pub fn within_bound(&self, grace: f64) -> bool {
        self.empirical_mean_distance <= self.bound + grace * self.standard_error
    }

    /// Bound after `t` steps, for plotting alongside [`Self::mean_by_step`].
    pub fn bound_at(&self, t: u64) -> f64 {
        radius_bound(self.noise_norm_rho, self.eta, self.c, t).unwrap_or(f64::NAN)
    }
}

/// Runs `trials` paired trajectories from zero, clean and noisy
/// (`w -= eta * (grad f(w) + sigma * xi)`, no clipping), and compares the
/// mean final distance with the bound.
pub fn radius_experiment(
    problem: &QuadraticProblem,
    eta: f64,
    sigma: f64,
    steps: u64,
    trials: usize,
    seed: u64,
) -> Result<RadiusReport> {
    let c = contraction_factor(problem.alpha(), problem.beta(), eta)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "noise multiplier must be >= 0, got {sigma}"
        )));
    }
    if trials == 0 || steps == 0 {
        return Err(Error::invalid("need at least one trial and one step"));
    }
    let d = problem.dim();
    let noise_norm_rho = libm::sqrt(d as f64) * sigma;
    let bound = radius_bound(noise_norm_rho, eta, c, steps)?;
    let clean = problem.gd_trajectory(eta, steps);

    let mut distances = Vec::with_capacity(trials);
    let mut sum_by_step = vec![0.0; steps as usize];
    let mut w = vec![0.0; d];
    let mut noise = vec![0.0; d];
    for trial in 0..trials {
        let mut rng = SeededRng::new(derive_seed(seed, trial as u64));
        w.iter_mut().for_each(|x| *x = 0.0);
        for t in 0..steps as usize {
            if sigma > 0.0 {
                rng.fill_gaussian(&mut noise);
                noise.iter_mut().for_each(|x| *x *= sigma);
                problem.step(&mut w, eta, Some(&noise));
            } else {
                problem.step(&mut w, eta, None);
            }
            let dist = distance(&w, &clean[t + 1]);
            if !dist.is_finite() {
                return Err(Error::InvalidStepSize {
                    eta,
                    limit: 2.0 / problem.beta(),
                });
            }
            sum_by_step[t] += dist;
        }
        distances.push(distance(&w, &clean[steps as usize]));
    }
    let n = trials as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let var = if trials > 1 {
        distances
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    Ok(RadiusReport {
        empirical_mean_distance: mean,
        standard_error: libm::sqrt(var / n),
        bound,
        c,
        noise_norm_rho,
        eta,
        sigma,
        steps,
        trials,
        seed,
        distances,
        mean_by_step: sum_by_step.into_iter().map(|s| s / n).collect(),
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Softmax probabilities of the logits `theta x`.
fn softmax_probs(theta: &Matrix, x: &[f64]) -> Vec<f64> {
    let mut z: Vec<f64> = (0..theta.rows())
        .map(|k| theta.row(k).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in &mut z {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
    z
}

/// Second derivatives of the cross-entropy loss of one sample with respect
/// to the weights: entry `[(i*d + j) * (K*d) + (k*d + l)]` is
/// `d^2 L / d theta_ij d theta_kl = x_j x_l (p_i [i = k] - p_i p_k)`.
/// The label drops out.
pub fn softmax_hessian(theta: &Matrix, x: &[f64]) -> Vec<f64> {
    let (k_classes, d) = (theta.rows(), theta.cols());
    let p = softmax_probs(theta, x);
    let n = k_classes * d;
    let mut h = vec![0.0; n * n];
    for i in 0..k_classes {
        for k in 0..k_classes {
            let a = if i == k {
                p[i] * (1.0 - p[i])
            } else {
                -p[i] * p[k]
            };
            for j in 0..d {
                for l in 0..d {
                    h[(i * d + j) * n + k * d + l] = a * x[j] * x[l];
                }
            }
        }
    }
    h
}

/// Largest Hessian entry magnitude at one point, without materialising the
/// Hessian: `max_{i,k} |A_ik| * max_j x_j^2` with `A = diag(p) - p p^T`.
pub fn max_hessian_entry(theta: &Matrix, x: &[f64]) -> f64 {
    let p = softmax_probs(theta, x);
    let mut a_max: f64 = 0.0;
    for i in 0..p.len() {
        for k in 0..p.len() {
            let a = if i == k {
                p[i] * (1.0 - p[i])
            } else {
                p[i] * p[k]
            };
            a_max = a_max.max(a);
        }
    }
    let x_max = x.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    a_max * x_max * x_max
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianProbe {
    /// Largest magnitude over the constructed point and all random probes.
    pub max_entry: f64,
    /// Value at the constructed extremum (`x = 1`, `p_0 = 1/2`).
    pub constructed_entry: f64,
    /// Largest value seen among the random probes alone.
    pub random_max_entry: f64,
    pub probes: usize,
}

/// Probes the softmax cross-entropy Hessian at random weights and features
/// in `[0, 1]^d`, plus a constructed point where the `1/4` cap is attained.
pub fn softmax_hessian_probe(
    d: usize,
    classes: usize,
    probes: usize,
    seed: u64,
) -> Result<HessianProbe> {
    if d < 2 || classes < 2 || probes == 0 {
        return Err(Error::invalid(
            "need d >= 2, at least 2 classes and at least one probe",
        ));
    }
    let (theta, x) = worst_case_point(d, classes);
    let constructed_entry = max_hessian_entry(&theta, &x);

    let mut rng = SeededRng::new(seed);
    let mut theta = Matrix::zeros(classes, d);
    let mut x = vec![0.0; d];
    let mut random_max: f64 = 0.0;
    for _ in 0..probes {
        // weight scales from 1e-2 to 1e2 so both flat and saturated
        // softmax regimes are visited
        let scale = libm::exp(rng.uniform_in(-4.6, 4.6));
        for v in theta.as_mut_slice() {
            *v = scale * rng.gaussian();
        }
        for v in &mut x {
            *v = rng.uniform();
        }
        random_max = random_max.max(max_hessian_entry(&theta, &x));
    }
    Ok(HessianProbe {
        max_entry: random_max.max(constructed_entry),
        constructed_entry,
        random_max_entry: random_max,
        probes,
    })
}

/// All-ones features and weights whose logits give class 0 probability
/// exactly one half: `z_0 = ln(K - 1)`, every other logit zero.
pub fn worst_case_point(d: usize, classes: usize) -> (Matrix, Vec<f64>) {
    let mut theta = Matrix::zeros(classes, d);
    if classes > 2 {
        let z0 = libm::log((classes - 1) as f64);
        theta.set(0, 0, z0);
    }
    (theta, vec![1.0; d])
}
