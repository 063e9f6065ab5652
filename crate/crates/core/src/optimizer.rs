//! Full-batch DP gradient descent on a bias-free linear softmax classifier.
//!
//! One step of the private trainer is
//!
//! ```text
//! grad = (sum_i clip_C(grad_i) + sigma * xi) / |D|
//! v    = rho * v + grad
//! w    = w - eta * v
//! ```
//!
//! starting from `w = 0`, with `xi` a fresh standard Gaussian matrix per
//! step. With `free_step` set, one more update `w -= eta * v` is taken with
//! the final momentum buffer; it touches no data and adds no noise.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::accounting::{gdp_of_run, GdpBudget};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// Losses above this (or non-finite ones) abort a run.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// `K x d` weight matrix, one row per class.
pub type ModelWeights = Matrix;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {rows}x{cols} = {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }
}

/// Labelled feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    /// `features` is row-major, `labels.len()` rows of `dim` columns.
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset has no samples"));
        }
        if dim == 0 || classes == 0 {
            return Err(Error::invalid(
                "dataset needs at least one feature and one class",
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::invalid(format!(
                "{} labels with dimension {dim} need {} features, got {}",
                labels.len(),
                labels.len() * dim,
                features.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(Error::invalid(format!(
                "label {y} of sample {i} is not below {classes}"
            )));
        }
        if let Some(i) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature at sample {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self {
            features,
            labels,
            dim,
            classes,
        })
    }

    /// Class count inferred as `max label + 1`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("rows have differing lengths"));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(rows.concat(), labels, dim, classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Same samples, relabelled into `classes >= self.classes()` classes.
    pub fn with_classes(mut self, classes: usize) -> Result<Self> {
        if classes < self.classes {
            return Err(Error::invalid(format!(
                "cannot shrink class count from {} to {classes}",
                self.classes
            )));
        }
        self.classes = classes;
        Ok(self)
    }

    fn check_weights(&self, weights: &ModelWeights) -> Result<()> {
        if weights.rows != self.classes || weights.cols != self.dim {
            return Err(Error::invalid(format!(
                "weights are {}x{} but the data has {} classes and {} features",
                weights.rows, weights.cols, self.classes, self.dim
            )));
        }
        Ok(())
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: u64,
    /// Noise multiplier applied to the clipped gradient sum.
    pub sigma: f64,
    pub clip_norm: f64,
    pub momentum: f64,
    pub free_step: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// Unit clipping, momentum 0.9 and the free step enabled.
    pub fn new(eta: f64, steps: u64, sigma: f64, seed: u64) -> Self {
        Self {
            eta,
            steps,
            sigma,
            clip_norm: 1.0,
            momentum: 0.9,
            free_step: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.eta
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "noise multiplier must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::invalid(format!(
                "clip norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    /// Product `eta * T`.
    pub fn total_step(&self) -> f64 {
        self.eta * self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// Norm of the (noisy) averaged gradient; for the free step, of the
    /// momentum buffer.
    pub grad_norm: f64,
    /// Training loss at the iterate the step was applied to.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub weights: ModelWeights,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub log: Vec<StepRecord>,
    pub config: TrainConfig,
    /// Guarantee of the run; `None` for noise-free runs.
    pub mu: Option<GdpBudget>,
    /// Set when the run diverged and the result describes the zero model.
    pub diverged_at: Option<u64>,
}

impl RunResult {
    /// Result reported for a run that diverged: the untrained zero model.
    pub fn zero_model(
        train: &Dataset,
        test: &Dataset,
        config: TrainConfig,
        step: u64,
    ) -> Result<Self> {
        let weights = Matrix::zeros(train.classes, train.dim);
        let (train_accuracy, train_loss) = evaluate(&weights, train)?;
        let (test_accuracy, test_loss) = evaluate(&weights, test)?;
        let mu = privacy_of(&config);
        Ok(Self {
            weights,
            train_accuracy,
            test_accuracy,
            train_loss,
            test_loss,
            log: Vec::new(),
            config,
            mu,
            diverged_at: Some(step),
        })
    }
}

fn privacy_of(config: &TrainConfig) -> Option<GdpBudget> {
    if config.sigma > 0.0 && config.steps > 0 {
        gdp_of_run(config.sigma, config.steps).ok()
    } else {
        None
    }
}

/// Writes the logit residual `p - onehot(label)` into `out` and returns the
/// cross-entropy loss `-ln p_label`.
fn softmax_residual(weights: &ModelWeights, x: &[f64], label: usize, out: &mut [f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (k, z) in out.iter_mut().enumerate() {
        *z = dot(weights.row(k), x);
        max = max.max(*z);
    }
    let z_label = out[label];
    let mut sum = 0.0;
    for z in out.iter_mut() {
        *z = libm::exp(*z - max);
        sum += *z;
    }
    for p in out.iter_mut() {
        *p /= sum;
    }
    out[label] -= 1.0;
    max + libm::log(sum) - z_label
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Cross-entropy loss of a single sample.
pub fn sample_loss(weights: &ModelWeights, x: &[f64], label: usize) -> f64 {
    let mut buf = vec![0.0; weights.rows];
    softmax_residual(weights, x, label, &mut buf)
}

/// Unclipped gradient of [`sample_loss`] with respect to the weights: row
/// `k` is `(p_k - [k = label]) * x`.
pub fn sample_gradient(weights: &ModelWeights, x: &[f64], label: usize) -> Matrix {
    let mut residual = vec![0.0; weights.rows];
    softmax_residual(weights, x, label, &mut residual);
    let mut g = Matrix::zeros(weights.rows, weights.cols);
    for (k, &r) in residual.iter().enumerate() {
        for (j, &xj) in x.iter().enumerate() {
            g.data[k * weights.cols + j] = r * xj;
        }
    }
    g
}

/// Adds `sum_i clip(grad_i)` into `acc` and returns the summed loss. The
/// per-sample gradient is the outer product of the residual and `x`, so its
/// norm is `|p - y| * |x|` and never has to be materialised.
fn gradient_pass(
    weights: &ModelWeights,
    data: &Dataset,
    clip_norm: Option<f64>,
    acc: &mut Matrix,
) -> f64 {
    let mut residual = vec![0.0; data.classes];
    let mut loss = 0.0;
    for i in 0..data.len() {
        let x = data.sample(i);
        loss += softmax_residual(weights, x, data.label(i), &mut residual);
        let scale = match clip_norm {
            Some(c) => {
                let norm = libm::sqrt(sq_norm(&residual) * sq_norm(x));
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        for (k, &r) in residual.iter().enumerate() {
            let coeff = scale * r;
            if coeff == 0.0 {
                continue;
            }
            let row = &mut acc.data[k * data.dim..(k + 1) * data.dim];
            for (a, &xj) in row.iter_mut().zip(x) {
                *a += coeff * xj;
            }
        }
    }
    loss
}

/// Sum of per-sample softmax cross-entropy gradients, each rescaled to
/// norm at most `clip_norm`.
pub fn clipped_gradient_sum(
    weights: &ModelWeights,
    data: &Dataset,
    clip_norm: f64,
) -> Result<Matrix> {
    data.check_weights(weights)?;
    if !(clip_norm > 0.0 && clip_norm.is_finite()) {
        return Err(Error::invalid(format!(
            "clip norm must be positive, got {clip_norm}"
        )));
    }
    let mut acc = Matrix::zeros(weights.rows, weights.cols);
    gradient_pass(weights, data, Some(clip_norm), &mut acc);
    Ok(acc)
}

/// Accuracy (argmax logit, ties to the lowest class) and mean cross-entropy.
pub fn evaluate(weights: &ModelWeights, data: &Dataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    data.check_weights(weights)?;
    let mut residual = vec![0.0; data.classes];
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let x = data.sample(i);
        let mut best = 0;
        let mut best_logit = f64::NEG_INFINITY;
        for k in 0..data.classes {
            let z = dot(weights.row(k), x);
            if z > best_logit {
                best_logit = z;
                best = k;
            }
        }
        if best == data.label(i) {
            correct += 1;
        }
        loss += softmax_residual(weights, x, data.label(i), &mut residual);
    }
    let n = data.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Full-batch DP gradient descent from zero weights.
///
/// `config.sigma` is expected to have been calibrated by the accountant for
/// `config.steps` steps. Deterministic given `config.seed`: the noise of step
/// `t` is stream `t` of the generator keyed by the seed.
pub fn dp_gd_train(train: &Dataset, config: &TrainConfig, test: &Dataset) -> Result<RunResult> {
    config.validate()?;
    if config.steps == 0 {
        return Err(Error::invalid("a private run needs at least one step"));
    }
    run(train, config, test, Some(config.clip_norm))
}

/// Noise-free, unclipped twin of [`dp_gd_train`] (`sigma` is ignored and
/// treated as zero). `steps = 0` returns the zero initialisation.
pub fn gd_train(train: &Dataset, config: &TrainConfig, test: &Dataset) -> Result<RunResult> {
    let config = TrainConfig {
        sigma: 0.0,
        ..config.clone()
    };
    config.validate()?;
    run(train, &config, test, None)
}

fn run(
    train: &Dataset,
    config: &TrainConfig,
    test: &Dataset,
    clip: Option<f64>,
) -> Result<RunResult> {
    if test.dim != train.dim || test.classes != train.classes {
        return Err(Error::invalid(format!(
            "test data is {} classes x {} features, training data {} x {}",
            test.classes, test.dim, train.classes, train.dim
        )));
    }
    let (k, d) = (train.classes, train.dim);
    let n = train.len() as f64;
    let mut weights = Matrix::zeros(k, d);
    let mut velocity = Matrix::zeros(k, d);
    let mut grad = Matrix::zeros(k, d);
    let mut noise = Matrix::zeros(k, d);
    let mut log = Vec::with_capacity(config.steps as usize + usize::from(config.free_step));

    for step in 0..config.steps {
        grad.fill(0.0);
        let loss = gradient_pass(&weights, train, clip, &mut grad) / n;
        if !(loss <= DIVERGENCE_LOSS) {
            return Err(Error::Diverged {
                step: step as usize,
            });
        }
        if config.sigma > 0.0 {
            SeededRng::stream(config.seed, step).fill_gaussian(&mut noise.data);
            for (g, xi) in grad.data.iter_mut().zip(&noise.data) {
                *g += config.sigma * xi;
            }
        }
        for g in &mut grad.data {
            *g /= n;
        }
        for ((v, w), g) in velocity
            .data
            .iter_mut()
            .zip(&mut weights.data)
            .zip(&grad.data)
        {
            *v = config.momentum * *v + g;
            *w -= config.eta * *v;
        }
        log.push(StepRecord {
            step,
            grad_norm: grad.norm(),
            loss,
        });
    }

    if config.free_step {
        let (_, loss) = evaluate(&weights, train)?;
        for (w, v) in weights.data.iter_mut().zip(&velocity.data) {
            *w -= config.eta * v;
        }
        log.push(StepRecord {
            step: config.steps,
            grad_norm: velocity.norm(),
            loss,
        });
    }

    let (train_accuracy, train_loss) = evaluate(&weights, train)?;
    if !(train_loss <= DIVERGENCE_LOSS) || weights.data.iter().any(|w| !w.is_finite()) {
        return Err(Error::Diverged {
            step: config.steps as usize,
        });
    }
    let (test_accuracy, test_loss) = evaluate(&weights, test)?;
    Ok(RunResult {
        weights,
        train_accuracy,
        test_accuracy,
        train_loss,
        test_loss,
        log,
        config: config.clone(),
        mu: privacy_of(config),
        diverged_at: None,
    })
}

/// Effective noise multiplier `sigma / B` and signal-to-noise ratio
/// `B / sigma` of an update averaged over a batch of `batch_size`.
/// `sigma = 0` reports an infinite SNR.
pub fn effective_snr(sigma: f64, batch_size: usize) -> Result<(f64, f64)> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "noise multiplier must be >= 0, got {sigma}"
        )));
    }
    let b = batch_size as f64;
    if sigma == 0.0 {
        return Ok((0.0, f64::INFINITY));
    }
    Ok((sigma / b, b / sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1]).unwrap()
    }

    #[test]
    fn dataset_invariants() {
        assert!(Dataset::new(vec![], vec![], 2, 2).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], vec![2], 2, 2).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], vec![0], 2, 2).is_err());
        assert!(Dataset::new(vec![1.0], vec![0], 2, 2).is_err());
        let d = Dataset::from_rows(&[vec![0.5, 0.5]], vec![3]).unwrap();
        assert_eq!(d.classes(), 4);
    }

    #[test]
    fn zero_weight_gradient_is_unclipped() {
        let data = Dataset::from_rows(&[vec![1.0, 0.0]], vec![0])
            .unwrap()
            .with_classes(2)
            .unwrap();
        let w = Matrix::zeros(2, 2);
        let g = clipped_gradient_sum(&w, &data, 1.0).unwrap();
        assert_eq!(g.as_slice(), &[-0.5, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn large_gradient_is_clipped_to_unit_norm() {
        let data = Dataset::from_rows(&[vec![10.0, 0.0]], vec![0])
            .unwrap()
            .with_classes(2)
            .unwrap();
        let w = Matrix::zeros(2, 2);
        let raw = sample_gradient(&w, data.sample(0), 0);
        assert!((raw.norm() - 50f64.sqrt()).abs() < 1e-12);
        let g = clipped_gradient_sum(&w, &data, 1.0).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-12);
        // direction preserved
        assert!((g.get(0, 0) / raw.get(0, 0) - g.get(1, 0) / raw.get(1, 0)).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = toy();
        assert!(clipped_gradient_sum(&Matrix::zeros(3, 2), &data, 1.0).is_err());
        assert!(evaluate(&Matrix::zeros(2, 3), &data).is_err());
    }

    #[test]
    fn zero_weights_predict_class_zero_with_uniform_loss() {
        let data = Dataset::from_rows(
            &[
                vec![1.0, 2.0],
                vec![3.0, -1.0],
                vec![0.0, 1.0],
                vec![2.0, 2.0],
            ],
            vec![0, 2, 1, 0],
        )
        .unwrap();
        let (acc, loss) = evaluate(&Matrix::zeros(3, 2), &data).unwrap();
        assert_eq!(acc, 0.5);
        assert!((loss - libm::log(3.0)).abs() < 1e-15);
    }

    #[test]
    fn separable_toy_is_classified_perfectly() {
        let data = toy();
        let w = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(evaluate(&w, &data).unwrap().0, 1.0);
    }

    #[test]
    fn single_noise_free_step_matches_closed_form() {
        let data = toy();
        let eta = 0.7;
        let config = TrainConfig {
            momentum: 0.0,
            free_step: false,
            ..TrainConfig::new(eta, 1, 0.0, 1)
        };
        let out = dp_gd_train(&data, &config, &data).unwrap();
        // mean gradient at zero: sample 0 rows (-0.5x, 0.5x) with x=(1,0),
        // sample 1 rows (0.5x, -0.5x) with x=(0,1)
        let expected = [0.25 * eta, -0.25 * eta, -0.25 * eta, 0.25 * eta];
        for (a, b) in out.weights.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(out.log.len(), 1);
        assert!((out.log[0].loss - libm::log(2.0)).abs() < 1e-15);
        assert!(out.mu.is_none());
    }

    #[test]
    fn log_has_one_entry_per_step_plus_free_step() {
        let data = toy();
        let out = dp_gd_train(&data, &TrainConfig::new(0.1, 5, 2.0, 3), &data).unwrap();
        assert_eq!(out.log.len(), 6);
        assert_eq!(out.log[5].step, 5);
        let mu = out.mu.unwrap().mu();
        assert!((mu - libm::sqrt(5.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_step_gd_returns_initialisation() {
        let data = toy();
        let out = gd_train(&data, &TrainConfig::new(0.5, 0, 0.0, 0), &data).unwrap();
        assert!(out.weights.as_slice().iter().all(|&w| w == 0.0));
        assert_eq!(out.log.len(), 1);
        assert!(dp_gd_train(&data, &TrainConfig::new(0.5, 0, 1.0, 0), &data).is_err());
    }

    #[test]
    fn runaway_learning_rate_diverges() {
        // identical features with conflicting labels: no step can fit all
        let data = Dataset::from_rows(
            &[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![0, 0, 1],
        )
        .unwrap();
        let config = TrainConfig::new(1e15, 50, 0.0, 0);
        let err = gd_train(&data, &config, &data).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err:?}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let data = toy();
        for config in [
            TrainConfig::new(0.0, 1, 1.0, 0),
            TrainConfig::new(0.1, 1, -1.0, 0),
            TrainConfig {
                momentum: 1.0,
                ..TrainConfig::new(0.1, 1, 1.0, 0)
            },
            TrainConfig {
                clip_norm: 0.0,
                ..TrainConfig::new(0.1, 1, 1.0, 0)
            },
        ] {
            assert!(matches!(
                dp_gd_train(&data, &config, &data),
                Err(Error::InvalidArgument(_))
            ));
        }
    }

    #[test]
    fn snr_examples() {
        let (eff, snr) = effective_snr(2561.0, 50_000).unwrap();
        assert!((eff - 0.05122).abs() < 1e-12);
        assert!((snr - 19.523_623_584_537_29).abs() < 1e-9);
        let (eff, snr) = effective_snr(1145.0, 10_000).unwrap();
        assert!((eff - 0.1145).abs() < 1e-15);
        assert!((snr - 8.733_624_454_148_47).abs() < 1e-9);
        assert_eq!(effective_snr(300.0, 300).unwrap().1, 1.0);
        assert_eq!(effective_snr(0.0, 10).unwrap().1, f64::INFINITY);
        assert!(effective_snr(1.0, 0).is_err());
    }
}
