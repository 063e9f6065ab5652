//! Differentially private hyperparameter search built around a single
//! scalar: the total step size `r = eta * T`.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the
//! numerical machinery:
//!
//! * [`accounting`]: exact Gaussian-DP accounting, conversion to and from
//!   `(epsilon, delta)`, noise calibration and budget planning for a
//!   multi-stage search.
//! * [`optimizer`]: full-batch DP gradient descent with unit clipping and
//!   momentum on a bias-free linear softmax classifier.
//! * [`hpo`]: low-budget sweeps over `r`, polynomial extrapolation of the
//!   best `r` to the final budget, and the random-search / grid-oracle
//!   baselines.
//! * [`theorycheck`]: Monte-Carlo checks of the noisy-vs-clean gradient
//!   descent radius bound and of the softmax Hessian cap.
//!
//! File formats, configuration and the command line live in the `linscale`
//! crate.
#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod accounting;
mod error;
pub mod exec;
pub mod hpo;
pub mod normal;
pub mod optimizer;
pub mod rng;
pub mod theorycheck;

pub use error::{Error, Result};
