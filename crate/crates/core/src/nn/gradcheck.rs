//! Finite-difference verification of the analytic parameter gradients.

use ndarray::ArrayView2;

use super::Model;
use crate::error::{Error, Result};
use crate::losses::{self, LossKind, LossSpec};
use crate::math::softmax_slice;

pub const DEFAULT_GRADCHECK_STEP: f64 = 1e-4;

/// Mean loss of `model` on a labelled batch, evaluated from loss values only.
/// IMAE goes through the quadrature loss value rather than its gradient.
fn mean_loss(
    model: &Model,
    spec: &LossSpec,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<f64> {
    let logits = model.predict(x)?;
    let mut probs = vec![0.0; logits.ncols()];
    let mut total = 0.0;
    for (row, &y) in logits.outer_iter().zip(labels) {
        softmax_slice(&row.to_vec(), &mut probs);
        let p_y = probs[y];
        total += match spec.kind {
            LossKind::Cce => losses::cce_loss(p_y)?,
            LossKind::Mae => losses::mae_loss(p_y)?,
            LossKind::Imae => losses::imae_loss_value(p_y, spec.t)?,
            LossKind::Gce => (1.0 - p_y.powf(spec.q)) / spec.q,
            LossKind::LabelSmoothing => {
                let target = losses::label_smoothing_targets(y, spec.epsilon, probs.len())?;
                target
                    .as_slice()
                    .iter()
                    .zip(&probs)
                    .filter(|(t, _)| **t > 0.0)
                    .map(|(t, p)| -t * p.max(losses::LOG_FLOOR).ln())
                    .sum()
            }
        };
    }
    Ok(total / labels.len() as f64)
}

/// Largest relative error between analytic and finite-difference parameter
/// gradients of the batch-mean loss. Uses the fourth-order central stencil
/// with step `step`; denominators are floored at 1e-8.
pub fn grad_check(
    model: &Model,
    spec: &LossSpec,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step must be positive, got {step}"
        )));
    }
    let mut work = model.clone();
    let logits = work.forward(x)?;
    let (_, per_example) = losses::batch_loss_and_grads(spec, logits.view(), labels)?;
    let analytic = work.backward(losses::backward_input(&per_example).view())?;
    work.clear_cache();

    let mut worst = 0.0f64;
    let tensors = work.params().len();
    for t in 0..tensors {
        let len = work.params()[t].len();
        for k in 0..len {
            let original = work.params()[t][k];
            let mut at = |offset: f64| -> Result<f64> {
                work.params_mut()[t][k] = original + offset;
                mean_loss(&work, spec, x, labels)
            };
            let f2 = at(2.0 * step)?;
            let f1 = at(step)?;
            let b1 = at(-step)?;
            let b2 = at(-2.0 * step)?;
            work.params_mut()[t][k] = original;
            let numeric = (-f2 + 8.0 * f1 - 8.0 * b1 + b2) / (12.0 * step);
            let a = analytic.0[t][k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
