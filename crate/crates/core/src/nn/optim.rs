use std::fmt;
use std::str::FromStr;

use super::{Gradients, Model, Slots};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Nesterov,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "momentum" => Ok(OptimizerKind::Momentum),
            "nesterov" => Ok(OptimizerKind::Nesterov),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidInput(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Nesterov => "nesterov",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Added to `sqrt(v_hat)` in Adam's denominator.
    pub delta: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Momentum,
            learning_rate: 0.1,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl OptimizerSpec {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Sgd,
            learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad =
            |what: &str, v: f64| Err(Error::InvalidInput(format!("{what} out of range: {v}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate", self.learning_rate);
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", self.momentum);
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", self.beta1);
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", self.beta2);
        }
        if !(self.delta > 0.0) {
            return bad("delta", self.delta);
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay", self.weight_decay);
        }
        Ok(())
    }
}

/// Applies one update. `step` counts from 1 and drives Adam's bias correction.
///
/// Weight decay is an L2 term folded into the gradient for every optimizer.
pub fn optimizer_step(
    model: &mut Model,
    grads: &Gradients,
    spec: &OptimizerSpec,
    step: u64,
) -> Result<()> {
    spec.validate()?;
    let mut slots = std::mem::take(&mut model.slots);
    let result = apply(model, &mut slots, grads, spec, step);
    model.slots = slots;
    result
}

fn apply(
    model: &mut Model,
    slots: &mut [Slots],
    grads: &Gradients,
    spec: &OptimizerSpec,
    step: u64,
) -> Result<()> {
    let mut params = model.params_mut();
    if params.len() != grads.0.len() {
        return Err(Error::Shape(format!(
            "model has {} parameter tensors, got {} gradients",
            params.len(),
            grads.0.len()
        )));
    }
    for (i, (theta, g)) in params.iter().zip(&grads.0).enumerate() {
        if theta.len() != g.len() {
            return Err(Error::Shape(format!(
                "parameter tensor {i} has {} entries, gradient has {}",
                theta.len(),
                g.len()
            )));
        }
    }
    let step = step.max(1);
    let (lr, wd, mu) = (spec.learning_rate, spec.weight_decay, spec.momentum);
    let bias1 = 1.0 - spec.beta1.powf(step as f64);
    let bias2 = 1.0 - spec.beta2.powf(step as f64);
    for ((theta, g), slot) in params.iter_mut().zip(&grads.0).zip(slots.iter_mut()) {
        if spec.kind != OptimizerKind::Sgd && slot.first.len() != theta.len() {
            slot.first = vec![0.0; theta.len()];
        }
        if spec.kind == OptimizerKind::Adam && slot.second.len() != theta.len() {
            slot.second = vec![0.0; theta.len()];
        }
        for (k, (t, &gk)) in theta.iter_mut().zip(g).enumerate() {
            let d = gk + wd * *t;
            let next = match spec.kind {
                OptimizerKind::Sgd => *t - lr * d,
                OptimizerKind::Momentum => {
                    let v = mu * slot.first[k] + d;
                    slot.first[k] = v;
                    *t - lr * v
                }
                OptimizerKind::Nesterov => {
                    let v = mu * slot.first[k] + d;
                    slot.first[k] = v;
                    *t - lr * (d + mu * v)
                }
                OptimizerKind::Adam => {
                    let m = spec.beta1 * slot.first[k] + (1.0 - spec.beta1) * d;
                    let s = spec.beta2 * slot.second[k] + (1.0 - spec.beta2) * d * d;
                    slot.first[k] = m;
                    slot.second[k] = s;
                    *t - lr * (m / bias1) / ((s / bias2).sqrt() + spec.delta)
                }
            };
            if !next.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite parameter after {} update (gradient {gk}, value {t})",
                    spec.kind
                )));
            }
            *t = next;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer};
    use approx::assert_abs_diff_eq;
    use ndarray::{Array1, Array2};

    fn scalar_model(theta: f64) -> Model {
        let d = Dense {
            weight: Array2::from_elem((1, 1), theta),
            bias: Array1::zeros(1),
        };
        Model::new(vec![Layer::Dense(d)]).unwrap()
    }

    fn grads(g: f64) -> Gradients {
        Gradients(vec![vec![g], vec![0.0]])
    }

    #[test]
    fn sgd_examples() {
        let mut m = scalar_model(1.0);
        optimizer_step(&mut m, &grads(0.0), &OptimizerSpec::sgd(0.1), 1).unwrap();
        assert_eq!(m.params()[0], &[1.0]);
        optimizer_step(&mut m, &grads(0.5), &OptimizerSpec::sgd(0.1), 2).unwrap();
        assert_abs_diff_eq!(m.params()[0][0], 0.95, epsilon = 1e-15);
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        let spec = OptimizerSpec {
            kind: OptimizerKind::Adam,
            learning_rate: 0.01,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut m = scalar_model(0.0);
        optimizer_step(&mut m, &grads(1.0), &spec, 1).unwrap();
        // m_hat = 1, v_hat = 1  =>  update = lr / (1 + delta)
        assert_abs_diff_eq!(m.params()[0][0], -0.01 / (1.0 + 1e-8), epsilon = 1e-15);
        let big_delta = OptimizerSpec { delta: 0.1, ..spec };
        let mut m = scalar_model(0.0);
        optimizer_step(&mut m, &grads(1.0), &big_delta, 1).unwrap();
        assert_abs_diff_eq!(m.params()[0][0], -0.01 / 1.1, epsilon = 1e-15);
    }

    #[test]
    fn zero_momentum_matches_sgd_bitwise() {
        let sgd = OptimizerSpec {
            weight_decay: 1e-3,
            ..OptimizerSpec::sgd(0.05)
        };
        let mom = OptimizerSpec {
            kind: OptimizerKind::Momentum,
            momentum: 0.0,
            ..sgd
        };
        let mut a = scalar_model(0.7);
        let mut b = scalar_model(0.7);
        for (step, g) in [0.3, -1.2, 0.05, 2.5, -0.7].iter().enumerate() {
            optimizer_step(&mut a, &grads(*g), &sgd, step as u64 + 1).unwrap();
            optimizer_step(&mut b, &grads(*g), &mom, step as u64 + 1).unwrap();
            assert_eq!(a.params()[0][0].to_bits(), b.params()[0][0].to_bits());
        }
    }

    #[test]
    fn momentum_and_nesterov_recurrences() {
        let spec = OptimizerSpec {
            kind: OptimizerKind::Momentum,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut m = scalar_model(1.0);
        optimizer_step(&mut m, &grads(1.0), &spec, 1).unwrap();
        optimizer_step(&mut m, &grads(1.0), &spec, 2).unwrap();
        // v1 = 1, v2 = 1.9
        assert_abs_diff_eq!(m.params()[0][0], 1.0 - 0.1 - 0.19, epsilon = 1e-15);

        let nesterov = OptimizerSpec {
            kind: OptimizerKind::Nesterov,
            ..spec
        };
        let mut m = scalar_model(1.0);
        optimizer_step(&mut m, &grads(1.0), &nesterov, 1).unwrap();
        // v1 = 1, step = lr (g + mu v1) = 0.19
        assert_abs_diff_eq!(m.params()[0][0], 0.81, epsilon = 1e-15);
    }

    #[test]
    fn weight_decay_alone_shrinks_parameters() {
        for kind in [
            OptimizerKind::Sgd,
            OptimizerKind::Momentum,
            OptimizerKind::Nesterov,
        ] {
            let spec = OptimizerSpec {
                kind,
                learning_rate: 0.1,
                momentum: 0.5,
                weight_decay: 0.5,
                ..Default::default()
            };
            let mut m = scalar_model(-2.0);
            let mut prev = 2.0;
            for step in 1..50 {
                optimizer_step(&mut m, &grads(0.0), &spec, step).unwrap();
                let now = m.params()[0][0].abs();
                assert!(now < prev, "{kind}: {now} !< {prev}");
                prev = now;
            }
        }
    }

    #[test]
    fn rejects_bad_updates() {
        let mut m = scalar_model(1.0);
        let err = optimizer_step(&mut m, &grads(f64::INFINITY), &OptimizerSpec::sgd(0.1), 1);
        assert!(matches!(err, Err(Error::Numeric(_))));
        let err = optimizer_step(
            &mut m,
            &Gradients(vec![vec![1.0]]),
            &OptimizerSpec::sgd(0.1),
            1,
        );
        assert!(matches!(err, Err(Error::Shape(_))));
        assert!(OptimizerSpec::sgd(0.0).validate().is_err());
    }
}
