//! Loss layers expressed through their gradient with respect to logits.
//!
//! Every loss returns a [`PerExampleGrad`] whose `weight` is the L1 norm of
//! the logit gradient. That norm is the example's effective weight during
//! training: CCE gives `2(1 - p_y)`, MAE gives `4 p_y (1 - p_y)` and IMAE
//! rescales the MAE gradient so its norm becomes `exp(T p_y (1 - p_y))`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::math::{quad_integrate, softmax_jacobian_row, softmax_slice, ProbVector};

/// Floor applied to `p_y` before taking a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Upper integration cutoff for the IMAE loss value, `1 - IMAE_CUTOFF`.
pub const IMAE_CUTOFF: f64 = 1e-9;

/// Simpson subdivisions used for the IMAE loss value.
pub const IMAE_LOSS_SUBDIVISIONS: usize = 2000;

/// Cheaper subdivision count for loss values that are only logged during training.
pub const IMAE_REPORT_SUBDIVISIONS: usize = 200;

pub const DEFAULT_T: f64 = 8.0;
pub const DEFAULT_Q: f64 = 0.7;
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Cce,
    Mae,
    Imae,
    Gce,
    LabelSmoothing,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Cce => "cce",
            LossKind::Mae => "mae",
            LossKind::Imae => "imae",
            LossKind::Gce => "gce",
            LossKind::LabelSmoothing => "ls",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cce" | "ce" => Ok(LossKind::Cce),
            "mae" => Ok(LossKind::Mae),
            "imae" => Ok(LossKind::Imae),
            "gce" => Ok(LossKind::Gce),
            "ls" | "label-smoothing" | "label_smoothing" | "labelsmoothing" => {
                Ok(LossKind::LabelSmoothing)
            }
            other => Err(Error::InvalidInput(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// A loss family together with its parameters. Parameters that do not
/// belong to `kind` are carried along but ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub t: f64,
    pub q: f64,
    pub epsilon: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec {
            kind,
            t: DEFAULT_T,
            q: DEFAULT_Q,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn cce() -> Self {
        Self::new(LossKind::Cce)
    }

    pub fn mae() -> Self {
        Self::new(LossKind::Mae)
    }

    pub fn imae(t: f64) -> Self {
        LossSpec {
            t,
            ..Self::new(LossKind::Imae)
        }
    }

    pub fn gce(q: f64) -> Self {
        LossSpec {
            q,
            ..Self::new(LossKind::Gce)
        }
    }

    pub fn label_smoothing(epsilon: f64) -> Self {
        LossSpec {
            epsilon,
            ..Self::new(LossKind::LabelSmoothing)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return Err(Error::InvalidInput(format!(
                "T must be >= 0, got {}",
                self.t
            )));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "q must lie in (0, 1], got {}",
                self.q
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Gradient-magnitude weight as a function of `p_y` alone, for the
    /// families where it depends on nothing else.
    pub fn weight(&self, p_y: f64) -> Result<f64> {
        check_prob(p_y)?;
        match self.kind {
            LossKind::Cce => Ok(weight_cce(p_y)),
            LossKind::Mae => Ok(weight_mae(p_y)),
            LossKind::Imae => weight_imae(p_y, self.t),
            LossKind::Gce => Ok(2.0 * p_y.powf(self.q) * (1.0 - p_y)),
            LossKind::LabelSmoothing => Err(Error::InvalidInput(
                "label-smoothing weight depends on the full probability vector".into(),
            )),
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::Imae => write!(f, "imae(T={})", self.t),
            LossKind::Gce => write!(f, "gce(q={})", self.q),
            LossKind::LabelSmoothing => write!(f, "ls(eps={})", self.epsilon),
            k => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleGrad {
    /// dL/dz for one example.
    pub grad_logits: Vec<f64>,
    /// L1 norm of `grad_logits`.
    pub weight: f64,
    pub loss_value: f64,
}

impl PerExampleGrad {
    fn from_grad(grad_logits: Vec<f64>, loss_value: f64) -> Self {
        let weight = grad_logits.iter().map(|g| g.abs()).sum();
        PerExampleGrad {
            grad_logits,
            weight,
            loss_value,
        }
    }
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "probability {p} outside [0, 1]"
        )))
    }
}

pub fn cce_loss(p_y: f64) -> Result<f64> {
    check_prob(p_y)?;
    Ok(-p_y.max(LOG_FLOOR).ln())
}

pub fn mae_loss(p_y: f64) -> Result<f64> {
    check_prob(p_y)?;
    Ok(2.0 * (1.0 - p_y))
}

pub fn weight_cce(p_y: f64) -> f64 {
    2.0 * (1.0 - p_y)
}

pub fn weight_mae(p_y: f64) -> f64 {
    4.0 * p_y * (1.0 - p_y)
}

pub fn weight_imae(p_y: f64, t: f64) -> Result<f64> {
    check_prob(p_y)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("T must be >= 0, got {t}")));
    }
    Ok((t * p_y * (1.0 - p_y)).exp())
}

pub fn cce_grad_logits(p: &ProbVector, y: usize) -> Result<PerExampleGrad> {
    let p_y = p.get(y)?;
    let grad = p
        .as_slice()
        .iter()
        .enumerate()
        .map(|(j, &p_j)| if j == y { p_y - 1.0 } else { p_j })
        .collect();
    Ok(PerExampleGrad::from_grad(grad, cce_loss(p_y)?))
}

pub fn mae_grad_logits(p: &ProbVector, y: usize) -> Result<PerExampleGrad> {
    let p_y = p.get(y)?;
    let grad = p
        .as_slice()
        .iter()
        .enumerate()
        .map(|(j, &p_j)| {
            if j == y {
                2.0 * p_y * (p_y - 1.0)
            } else {
                2.0 * p_y * p_j
            }
        })
        .collect();
    Ok(PerExampleGrad::from_grad(grad, mae_loss(p_y)?))
}

/// IMAE gradient: the MAE logit gradient rescaled so its L1 norm equals
/// `exp(T p_y (1 - p_y))`.
pub fn imae_grad_logits(p: &ProbVector, y: usize, t: f64) -> Result<PerExampleGrad> {
    imae_grad_with(p, y, t, IMAE_LOSS_SUBDIVISIONS)
}

fn imae_grad_with(p: &ProbVector, y: usize, t: f64, n: usize) -> Result<PerExampleGrad> {
    let p_y = p.get(y)?;
    let w = weight_imae(p_y, t)?;
    // Same floor as the CCE log keeps the reported value finite at p_y = 0.
    let loss_value = imae_loss_value_with(p_y.max(LOG_FLOOR), t, n)?;
    // MAE gradient times w / (4 p_y (1 - p_y)), simplified so that the
    // p_y in {0, 1} corners (where the ratio is 0/0) need no special case:
    // dL/dz_y = -w/2 and dL/dz_j = w p_j / (2(1 - p_y)).
    // 1 - p_y is taken as the off-label mass, which stays exact after p_y
    // has rounded to 1. If every off-label entry underflowed, the w/2 is
    // split evenly so the gradient still sums to zero.
    let rest: f64 = p
        .as_slice()
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, &p_j)| p_j)
        .sum();
    let off = p.as_slice().len() - 1;
    let grad = p
        .as_slice()
        .iter()
        .enumerate()
        .map(|(j, &p_j)| {
            if j == y {
                -w / 2.0
            } else if rest > 0.0 {
                w * p_j / (2.0 * rest)
            } else {
                w / (2.0 * off as f64)
            }
        })
        .collect();
    Ok(PerExampleGrad::from_grad(grad, loss_value))
}

/// IMAE loss value, defined as the integral of `-dL/dp_y` from `p_y` to 1.
///
/// The integrand `exp(T u(1-u)) / (2u(1-u))` is split into the smooth part
/// `expm1(T u(1-u)) / (2u(1-u))`, integrated with Simpson's rule, and
/// `1 / (2u(1-u))`, integrated in closed form. The upper limit is
/// `1 - IMAE_CUTOFF`, where the second piece still diverges logarithmically.
pub fn imae_loss_value(p_y: f64, t: f64) -> Result<f64> {
    imae_loss_value_with(p_y, t, IMAE_LOSS_SUBDIVISIONS)
}

pub fn imae_loss_value_with(p_y: f64, t: f64, n: usize) -> Result<f64> {
    check_prob(p_y)?;
    if p_y <= 0.0 {
        return Err(Error::InvalidInput("IMAE loss diverges at p_y = 0".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("T must be >= 0, got {t}")));
    }
    let upper = 1.0 - IMAE_CUTOFF;
    if p_y >= upper {
        return Ok(0.0);
    }
    let logit = |u: f64| 0.5 * (u / (1.0 - u)).ln();
    let singular = logit(upper) - logit(p_y);
    let smooth = if t == 0.0 {
        0.0
    } else {
        quad_integrate(
            |u| {
                let x = u * (1.0 - u);
                if x == 0.0 {
                    t / 2.0
                } else {
                    (t * x).exp_m1() / (2.0 * x)
                }
            },
            p_y,
            upper,
            n,
        )?
    };
    Ok(smooth + singular)
}

/// Generalized cross entropy `(1 - p_y^q) / q`.
pub fn gce_loss_and_grad(p: &ProbVector, y: usize, q: f64) -> Result<PerExampleGrad> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "q must lie in (0, 1], got {q}"
        )));
    }
    let p_y = p.get(y)?;
    let dl_dpy = -p_y.powf(q - 1.0);
    let grad = softmax_jacobian_row(p, y)?
        .into_iter()
        .map(|d| if p_y == 0.0 { 0.0 } else { dl_dpy * d })
        .collect();
    Ok(PerExampleGrad::from_grad(grad, (1.0 - p_y.powf(q)) / q))
}

pub fn label_smoothing_targets(y: usize, epsilon: f64, classes: usize) -> Result<ProbVector> {
    if classes < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if y >= classes {
        return Err(Error::Index {
            index: y,
            len: classes,
        });
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie in [0, 1), got {epsilon}"
        )));
    }
    let off = epsilon / (classes - 1) as f64;
    let targets = (0..classes)
        .map(|j| if j == y { 1.0 - epsilon } else { off })
        .collect();
    ProbVector::new(targets)
}

/// Cross entropy against label-smoothed targets; gradient is `p - target`.
pub fn label_smoothing_loss_and_grad(
    p: &ProbVector,
    y: usize,
    epsilon: f64,
) -> Result<PerExampleGrad> {
    let target = label_smoothing_targets(y, epsilon, p.len())?;
    let mut loss = 0.0;
    let grad = p
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p_j, &t_j)| {
            if t_j > 0.0 {
                loss -= t_j * p_j.max(LOG_FLOOR).ln();
            }
            p_j - t_j
        })
        .collect();
    Ok(PerExampleGrad::from_grad(grad, loss))
}

/// Per-example gradient for any loss family.
pub fn loss_and_grad(spec: &LossSpec, p: &ProbVector, y: usize) -> Result<PerExampleGrad> {
    per_example(spec, p, y, IMAE_LOSS_SUBDIVISIONS)
}

fn per_example(spec: &LossSpec, p: &ProbVector, y: usize, n: usize) -> Result<PerExampleGrad> {
    match spec.kind {
        LossKind::Cce => cce_grad_logits(p, y),
        LossKind::Mae => mae_grad_logits(p, y),
        LossKind::Imae => imae_grad_with(p, y, spec.t, n),
        LossKind::Gce => gce_loss_and_grad(p, y, spec.q),
        LossKind::LabelSmoothing => label_smoothing_loss_and_grad(p, y, spec.epsilon),
    }
}

/// Mean loss over a batch plus each example's logit gradient.
///
/// The per-example gradients are those of the single-example loss; the
/// gradient of the batch-mean objective is obtained with [`backward_input`].
pub fn batch_loss_and_grads(
    spec: &LossSpec,
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, Vec<PerExampleGrad>)> {
    batch_with(spec, logits, labels, IMAE_LOSS_SUBDIVISIONS)
}

/// Same as [`batch_loss_and_grads`] but with a cheaper IMAE loss value,
/// for the training loop where the value is only logged.
pub fn batch_loss_and_grads_fast(
    spec: &LossSpec,
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, Vec<PerExampleGrad>)> {
    batch_with(spec, logits, labels, IMAE_REPORT_SUBDIVISIONS)
}

fn batch_with(
    spec: &LossSpec,
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    n: usize,
) -> Result<(f64, Vec<PerExampleGrad>)> {
    spec.validate()?;
    let (rows, classes) = logits.dim();
    if rows == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if labels.len() != rows {
        return Err(Error::Shape(format!(
            "{rows} logit rows but {} labels",
            labels.len()
        )));
    }
    if classes < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    let mut probs = vec![0.0; classes];
    let mut grads = Vec::with_capacity(rows);
    for (row, &y) in logits.outer_iter().zip(labels) {
        if y >= classes {
            return Err(Error::Index {
                index: y,
                len: classes,
            });
        }
        let z = row.to_vec();
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        softmax_slice(&z, &mut probs);
        let p = ProbVector::new(probs.clone())?;
        grads.push(per_example(spec, &p, y, n)?);
    }
    let mean = pairwise_sum(&grads.iter().map(|g| g.loss_value).collect::<Vec<_>>()) / rows as f64;
    Ok((mean, grads))
}

/// Gradient of the batch-mean objective with respect to the logits:
/// each example's logit gradient divided by the batch size.
pub fn backward_input(grads: &[PerExampleGrad]) -> Array2<f64> {
    let rows = grads.len();
    let classes = grads.first().map_or(0, |g| g.grad_logits.len());
    let scale = 1.0 / rows as f64;
    Array2::from_shape_fn((rows, classes), |(i, j)| grads[i].grad_logits[j] * scale)
}

/// Fixed-order pairwise summation.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::softmax_of;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn assert_vec(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert_abs_diff_eq!(*g, *w, epsilon = tol);
        }
    }

    #[test]
    fn cce_loss_values() {
        assert_eq!(cce_loss(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            cce_loss(0.5).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            cce_loss(0.1).unwrap(),
            std::f64::consts::LN_10,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(cce_loss(0.0).unwrap(), -(1e-12f64).ln(), epsilon = 1e-9);
        assert!(cce_loss(1.5).is_err());
        assert!(cce_loss(-0.1).is_err());
    }

    #[test]
    fn mae_loss_values() {
        assert_eq!(mae_loss(1.0).unwrap(), 0.0);
        assert_eq!(mae_loss(0.0).unwrap(), 2.0);
        assert_eq!(mae_loss(0.25).unwrap(), 1.5);
        assert!(mae_loss(1.01).is_err());
    }

    #[test]
    fn cce_gradient_examples() {
        let g = cce_grad_logits(&pv(&[0.5, 0.3, 0.2]), 0).unwrap();
        assert_vec(&g.grad_logits, &[-0.5, 0.3, 0.2], 1e-12);
        assert_abs_diff_eq!(g.weight, 1.0, epsilon = 1e-12);
        let g = cce_grad_logits(&pv(&[1.0, 0.0, 0.0]), 0).unwrap();
        assert_vec(&g.grad_logits, &[0.0, 0.0, 0.0], 0.0);
        assert_eq!(g.weight, 0.0);
        let g = cce_grad_logits(&pv(&[0.1, 0.9]), 0).unwrap();
        assert_vec(&g.grad_logits, &[-0.9, 0.9], 1e-12);
        assert_abs_diff_eq!(g.weight, 1.8, epsilon = 1e-12);
        assert!(cce_grad_logits(&pv(&[0.1, 0.9]), 2).is_err());
    }

    #[test]
    fn mae_gradient_examples() {
        let g = mae_grad_logits(&pv(&[0.6, 0.3, 0.1]), 0).unwrap();
        assert_vec(&g.grad_logits, &[-0.48, 0.36, 0.12], 1e-12);
        assert_abs_diff_eq!(g.weight, 0.96, epsilon = 1e-12);
        let g = mae_grad_logits(&pv(&[1.0, 0.0]), 0).unwrap();
        assert_eq!(g.weight, 0.0);
        let g = mae_grad_logits(&pv(&[0.5, 0.5]), 0).unwrap();
        assert_abs_diff_eq!(g.weight, 1.0, epsilon = 1e-15);
    }

    /// Central difference of `loss(softmax(z)[y])` with respect to each logit.
    fn fd_logit_grad(z: &[f64], y: usize, loss: impl Fn(f64) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..z.len())
            .map(|j| {
                let mut plus = z.to_vec();
                let mut minus = z.to_vec();
                plus[j] += h;
                minus[j] -= h;
                let lp = loss(softmax_of(&plus).unwrap().as_slice()[y]);
                let lm = loss(softmax_of(&minus).unwrap().as_slice()[y]);
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn cce_and_mae_examples_match_finite_differences() {
        let z: Vec<f64> = [0.5f64, 0.3, 0.2].iter().map(|p| p.ln()).collect();
        let fd = fd_logit_grad(&z, 0, |p| -p.ln());
        assert_vec(&fd, &[-0.5, 0.3, 0.2], 1e-8);
        let z: Vec<f64> = [0.1f64, 0.9].iter().map(|p| p.ln()).collect();
        let fd = fd_logit_grad(&z, 0, |p| -p.ln());
        assert_vec(&fd, &[-0.9, 0.9], 1e-8);
        let z: Vec<f64> = [0.6f64, 0.3, 0.1].iter().map(|p| p.ln()).collect();
        let fd = fd_logit_grad(&z, 0, |p| 2.0 * (1.0 - p));
        assert_vec(&fd, &[-0.48, 0.36, 0.12], 1e-8);
    }

    #[test]
    fn imae_weight_examples() {
        assert_eq!(weight_imae(0.37, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(weight_imae(0.5, 8.0).unwrap(), 7.389056, epsilon = 1e-5);
        assert_eq!(weight_imae(0.0, 8.0).unwrap(), 1.0);
        assert_eq!(weight_imae(1.0, 8.0).unwrap(), 1.0);
    }

    #[test]
    fn imae_gradient_examples() {
        let g = imae_grad_logits(&pv(&[0.6, 0.3, 0.1]), 0, 8.0).unwrap();
        let scale = 1.92f64.exp() / 0.96;
        assert_vec(
            &g.grad_logits,
            &[-0.48 * scale, 0.36 * scale, 0.12 * scale],
            1e-12,
        );
        assert_vec(&g.grad_logits, &[-3.4105, 2.5579, 0.8526], 1e-3);
        assert_abs_diff_eq!(g.weight, 6.8210, epsilon = 1e-3);

        let g = imae_grad_logits(&pv(&[0.2, 0.5, 0.3]), 1, 0.0).unwrap();
        assert_eq!(g.weight, 1.0);

        let e2 = 2.0f64.exp();
        let g = imae_grad_logits(&pv(&[0.5, 0.5]), 0, 8.0).unwrap();
        assert_vec(&g.grad_logits, &[-e2 / 2.0, e2 / 2.0], 1e-12);
        assert_abs_diff_eq!(g.weight, e2, epsilon = 1e-12);
    }

    #[test]
    fn imae_saturated_corners_use_closed_form() {
        // p_y = 0: grad_y = -1/2, off-label entries share the other half
        let g = imae_grad_logits(&pv(&[0.0, 0.25, 0.75]), 0, 8.0).unwrap();
        assert_vec(&g.grad_logits, &[-0.5, 0.125, 0.375], 1e-15);
        assert_eq!(g.weight, 1.0);
        assert!(g.loss_value.is_finite() && g.loss_value > 10.0);
        // p_y rounded to 1: off-label mass still sets the split
        let g = imae_grad_logits(&pv(&[1.0, 1e-14, 3e-14]), 0, 8.0).unwrap();
        assert_vec(&g.grad_logits, &[-0.5, 0.125, 0.375], 1e-15);
        assert_abs_diff_eq!(g.grad_logits.iter().sum::<f64>(), 0.0, epsilon = 1e-15);
        // all off-label entries underflowed: even split
        let g = imae_grad_logits(&pv(&[1.0, 0.0, 0.0]), 0, 8.0).unwrap();
        assert_vec(&g.grad_logits, &[-0.5, 0.25, 0.25], 0.0);
        assert_eq!(g.loss_value, 0.0);
    }

    #[test]
    fn imae_loss_value_examples() {
        assert_eq!(imae_loss_value(1.0, 8.0).unwrap(), 0.0);
        assert!(imae_loss_value(0.3, 8.0).unwrap() > imae_loss_value(0.7, 8.0).unwrap());
        assert!(imae_loss_value(0.0, 8.0).is_err());
        // T = 0 reduces to the antiderivative (1/2) ln(u / (1 - u)) evaluated
        // between 0.5 and the cutoff 1 - 1e-9: (1/2) ln((1 - 1e-9) / 1e-9).
        let cutoff_value = 0.5 * ((1.0 - 1e-9) / 1e-9f64).ln();
        // 1 - (1 - 1e-9) is not exactly 1e-9 in f64, hence the 1e-7 slack.
        assert_abs_diff_eq!(
            imae_loss_value(0.5, 0.0).unwrap(),
            cutoff_value,
            epsilon = 1e-7
        );
        assert_abs_diff_eq!(imae_loss_value(0.5, 0.0).unwrap(), 10.3616, epsilon = 1e-4);
    }

    #[test]
    fn imae_loss_value_matches_brute_quadrature() {
        // Independent route: direct Simpson on the raw integrand after the
        // substitution u = 1 - exp(-s), which flattens the endpoint singularity.
        let t: f64 = 8.0;
        for &p in &[0.05, 0.3, 0.5, 0.9] {
            let s_hi = -(IMAE_CUTOFF.ln());
            let s_lo = -((1.0f64 - p).ln());
            let direct = quad_integrate(
                |s| {
                    let u = 1.0 - (-s).exp();
                    let x = u * (1.0 - u);
                    (t * x).exp() / (2.0 * x) * (-s).exp()
                },
                s_lo,
                s_hi,
                200_000,
            )
            .unwrap();
            assert_abs_diff_eq!(imae_loss_value(p, t).unwrap(), direct, epsilon = 1e-7);
        }
    }

    #[test]
    fn imae_loss_is_unbounded_towards_zero() {
        let mut prev = 0.0;
        for k in 2..=6 {
            let v = imae_loss_value(10f64.powi(-k), 8.0).unwrap();
            assert!(v > prev, "not growing at 1e-{k}: {v} <= {prev}");
            prev = v;
        }
    }

    #[test]
    fn gce_examples() {
        let p = pv(&[0.3, 0.5, 0.2]);
        let g1 = gce_loss_and_grad(&p, 1, 1.0).unwrap();
        let m = mae_grad_logits(&p, 1).unwrap();
        for (a, b) in g1.grad_logits.iter().zip(&m.grad_logits) {
            assert_abs_diff_eq!(*a, 0.5 * b, epsilon = 1e-9);
        }
        let g = gce_loss_and_grad(&pv(&[0.5, 0.5]), 0, 0.7).unwrap();
        let expected = (1.0 - (-0.7 * 2f64.ln()).exp()) / 0.7;
        assert_abs_diff_eq!(g.loss_value, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(g.loss_value, 0.5492, epsilon = 1e-4);
        let g = gce_loss_and_grad(&pv(&[1.0, 0.0]), 0, 0.7).unwrap();
        assert_eq!(g.loss_value, 0.0);
        assert_eq!(g.weight, 0.0);
        assert!(gce_loss_and_grad(&p, 0, 0.0).is_err());
        assert!(gce_loss_and_grad(&p, 0, 1.5).is_err());
    }

    #[test]
    fn label_smoothing_examples() {
        assert_eq!(
            label_smoothing_targets(0, 0.0, 3).unwrap().as_slice(),
            &[1.0, 0.0, 0.0]
        );
        assert_vec(
            label_smoothing_targets(1, 0.1, 3).unwrap().as_slice(),
            &[0.05, 0.9, 0.05],
            1e-15,
        );
        assert!(label_smoothing_targets(0, 1.0, 3).is_err());
        assert!(label_smoothing_targets(0, -0.1, 3).is_err());
        let g = label_smoothing_loss_and_grad(&pv(&[0.7, 0.2, 0.1]), 0, 0.0).unwrap();
        let c = cce_grad_logits(&pv(&[0.7, 0.2, 0.1]), 0).unwrap();
        assert_vec(&g.grad_logits, &c.grad_logits, 1e-15);
        assert_abs_diff_eq!(g.loss_value, c.loss_value, epsilon = 1e-15);
    }

    #[test]
    fn batch_dispatch() {
        let logits = array![[0.2, -0.4, 1.1]];
        let p = softmax_of(&[0.2, -0.4, 1.1]).unwrap();
        for spec in [
            LossSpec::cce(),
            LossSpec::mae(),
            LossSpec::imae(8.0),
            LossSpec::gce(0.7),
        ] {
            let (mean, grads) = batch_loss_and_grads(&spec, logits.view(), &[2]).unwrap();
            let single = loss_and_grad(&spec, &p, 2).unwrap();
            assert_eq!(grads[0], single);
            assert_eq!(mean, single.loss_value);
        }
        let twice = array![[0.2, -0.4, 1.1], [0.2, -0.4, 1.1]];
        let (once_mean, _) = batch_loss_and_grads(&LossSpec::cce(), logits.view(), &[1]).unwrap();
        let (twice_mean, _) =
            batch_loss_and_grads(&LossSpec::cce(), twice.view(), &[1, 1]).unwrap();
        assert_abs_diff_eq!(once_mean, twice_mean, epsilon = 1e-15);
    }

    #[test]
    fn batch_errors() {
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(batch_loss_and_grads(&LossSpec::cce(), empty.view(), &[]).is_err());
        let logits = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(matches!(
            batch_loss_and_grads(&LossSpec::cce(), logits.view(), &[0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            batch_loss_and_grads(&LossSpec::cce(), logits.view(), &[0, 2]),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn batch_cce_matches_finite_difference_of_mean_objective() {
        let logits = array![
            [0.3, -1.2, 0.8, 0.1],
            [1.5, 0.2, -0.7, -0.3],
            [-0.4, 0.9, 0.0, 2.1],
            [0.6, 0.6, -1.0, 0.4]
        ];
        let labels = [2, 0, 3, 1];
        let spec = LossSpec::cce();
        let (_, grads) = batch_loss_and_grads(&spec, logits.view(), &labels).unwrap();
        let analytic = backward_input(&grads);
        let h = 1e-6;
        let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..4 {
            for j in 0..4 {
                let mut plus = logits.clone();
                let mut minus = logits.clone();
                plus[[i, j]] += h;
                minus[[i, j]] -= h;
                let lp = batch_loss_and_grads(&spec, plus.view(), &labels).unwrap().0;
                let lm = batch_loss_and_grads(&spec, minus.view(), &labels)
                    .unwrap()
                    .0;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - analytic[[i, j]]).abs() / scale <= 1e-6);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(LossSpec::imae(-1.0).validate().is_err());
        assert!(LossSpec::gce(0.0).validate().is_err());
        assert!(LossSpec::label_smoothing(1.0).validate().is_err());
        assert!(LossSpec::cce().validate().is_ok());
        assert_eq!("IMAE".parse::<LossKind>().unwrap(), LossKind::Imae);
        assert!("focal".parse::<LossKind>().is_err());
    }

    fn any_case() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (2usize..12).prop_flat_map(|c| (proptest::collection::vec(-6.0f64..6.0, c), 0..c))
    }

    proptest! {
        #[test]
        fn weight_is_l1_norm_and_signs_hold((z, y) in any_case(), t in 0.0f64..16.0) {
            let p = softmax_of(&z).unwrap();
            let specs = [
                LossSpec::cce(), LossSpec::mae(), LossSpec::imae(t),
                LossSpec::gce(0.7), LossSpec::label_smoothing(0.1),
            ];
            for spec in specs {
                let g = loss_and_grad(&spec, &p, y).unwrap();
                let l1: f64 = g.grad_logits.iter().map(|v| v.abs()).sum();
                prop_assert!((g.weight - l1).abs() <= 1e-12);
                prop_assert!(g.weight >= 0.0);
                if spec.kind != LossKind::LabelSmoothing {
                    prop_assert!(g.grad_logits[y] <= 0.0);
                    for (j, v) in g.grad_logits.iter().enumerate() {
                        if j != y { prop_assert!(*v >= 0.0); }
                    }
                }
            }
        }

        #[test]
        fn imae_is_parallel_to_mae((z, y) in any_case(), t in 0.0f64..16.0) {
            let p = softmax_of(&z).unwrap();
            let m = mae_grad_logits(&p, y).unwrap();
            prop_assume!(m.weight > 1e-8);
            let g = imae_grad_logits(&p, y, t).unwrap();
            let ratio = g.weight / m.weight;
            for (a, b) in g.grad_logits.iter().zip(&m.grad_logits) {
                prop_assert!((a - ratio * b).abs() <= 1e-9 * a.abs().max(1.0));
            }
            let p_y = p.as_slice()[y];
            prop_assert!((g.weight - (t * p_y * (1.0 - p_y)).exp()).abs() <= 1e-9);
        }
    }
}
