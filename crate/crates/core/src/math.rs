//! Scalar and vector primitives shared by the loss, analysis and training code.

use crate::error::{Error, Result};

/// Default number of Simpson subdivisions over a unit interval.
pub const DEFAULT_SUBDIVISIONS: usize = 2000;

/// Class probabilities produced by [`softmax`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Wraps `values` after checking they form a distribution.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "probability vector needs at least 2 classes, got {}",
                values.len()
            )));
        }
        if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(ProbVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> Result<f64> {
        self.0.get(class).copied().ok_or(Error::Index {
            index: class,
            len: self.0.len(),
        })
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Real-valued class scores, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "logit vector needs at least 2 classes, got {}",
                values.len()
            )));
        }
        if values.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidInput("logits must be finite".into()));
        }
        Ok(LogitVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Max-shifted softmax over a raw slice. Callers guarantee finiteness.
pub(crate) fn softmax_slice(z: &[f64], out: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax(z: &LogitVector) -> ProbVector {
    let mut out = vec![0.0; z.0.len()];
    softmax_slice(&z.0, &mut out);
    ProbVector(out)
}

/// Convenience wrapper validating a raw slice of logits.
pub fn softmax_of(z: &[f64]) -> Result<ProbVector> {
    LogitVector::new(z.to_vec()).map(|l| softmax(&l))
}

/// Row `y` of the softmax Jacobian: `d p_y / d z_j` for every class `j`.
pub fn softmax_jacobian_row(p: &ProbVector, y: usize) -> Result<Vec<f64>> {
    let p_y = p.get(y)?;
    Ok(p.0
        .iter()
        .enumerate()
        .map(|(j, &p_j)| {
            if j == y {
                p_y * (1.0 - p_y)
            } else {
                -p_y * p_j
            }
        })
        .collect())
}

/// The error function, accurate to ~1 ulp over the real line.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Composite Simpson estimate of the integral of `f` over `[a, b]`.
///
/// `n` is rounded up to the next even number of subintervals.
pub fn quad_integrate<F>(f: F, a: f64, b: f64, n: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidInput(format!(
            "integration bounds must satisfy a < b, got [{a}, {b}]"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 subdivisions, got {n}"
        )));
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("integrand is {v} at {x}")))
        }
    };
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..n {
        let v = eval(a + k as f64 * h)?;
        if k % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    Ok(h / 3.0 * (eval(a)? + 4.0 * odd + 2.0 * even + eval(b)?))
}
