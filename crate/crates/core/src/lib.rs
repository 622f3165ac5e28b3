//! Noise-robust loss experiments built around gradient-magnitude example
//! weighting.
//!
//! Losses are defined by their gradient with respect to logits. The L1
//! norm of that gradient is the weight an example receives during
//! training, which is what separates CCE, MAE and IMAE:
//!
//! | loss | weight `‖∂L/∂z‖₁` |
//! |------|-------------------|
//! | CCE  | `2(1 − p_y)` |
//! | MAE  | `4 p_y (1 − p_y)` |
//! | IMAE | `exp(T p_y (1 − p_y))` |
//!
//! Modules:
//! - [`math`]: softmax, its Jacobian, `erf`, Simpson quadrature
//! - [`losses`]: per-example logit gradients and batch dispatch
//! - [`analysis`]: weight curves, impact ratios, weight variance
//! - [`nn`]: small MLP/CNN with explicit backward passes and optimizers
//! - [`data`]: CIFAR-10 / MNIST readers, Gaussian blobs, label noise
//! - [`harness`]: configuration, training loop, split metrics
//! - [`cli`]: the `nll` command-line front end

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod harness;
pub mod losses;
pub mod math;
pub mod nn;

pub use error::{Error, Result};
