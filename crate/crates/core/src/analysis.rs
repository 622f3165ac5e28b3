//! Weight-curve geometry: how strongly each loss weights an example as a
//! function of its labelled-class probability, and the variance of that
//! weight under uniformly distributed probabilities.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::math::{erf, quad_integrate};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightCurve {
    pub spec: LossSpec,
    /// `(p, weight)` on a uniform grid over `[0, 1]`.
    pub samples: Vec<(f64, f64)>,
}

pub fn weight_curve(spec: &LossSpec, n_points: usize) -> Result<WeightCurve> {
    if n_points < 2 {
        return Err(Error::InvalidInput(format!(
            "a weight curve needs at least 2 points, got {n_points}"
        )));
    }
    spec.validate()?;
    let last = (n_points - 1) as f64;
    let samples = (0..n_points)
        .map(|k| {
            let p = k as f64 / last;
            spec.weight(p).map(|w| (p, w))
        })
        .collect::<Result<_>>()?;
    Ok(WeightCurve {
        spec: *spec,
        samples,
    })
}

/// `∫ w² dp - (∫ w dp)²` over `p ∈ [0, 1]`, by Simpson's rule.
pub fn weight_variance_numeric(spec: &LossSpec, n: usize) -> Result<f64> {
    spec.validate()?;
    if spec.kind == LossKind::LabelSmoothing {
        return Err(Error::InvalidInput(
            "label smoothing has no scalar weight curve".into(),
        ));
    }
    let w = |p: f64| spec.weight(p.clamp(0.0, 1.0)).unwrap_or(f64::NAN);
    let second = quad_integrate(|p| w(p).powi(2), 0.0, 1.0, n)?;
    let first = quad_integrate(w, 0.0, 1.0, n)?;
    Ok(second - first * first)
}

/// Closed form of the IMAE weight variance:
/// `√π erf(√(2T)/2) e^{T/2} / √(2T) − π erf²(√T/2) e^{T/2} / T`.
pub fn imae_variance_analytic(t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("T must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let pi = std::f64::consts::PI;
    let half = (t / 2.0).exp();
    let second = pi.sqrt() * erf((2.0 * t).sqrt() / 2.0) * half / (2.0 * t).sqrt();
    let first_sq = pi * erf(t.sqrt() / 2.0).powi(2) * half / t;
    Ok(second - first_sq)
}

/// Ratio of the weights at two probabilities, `w(p1) / w(p2)`.
pub fn impact_ratio(spec: &LossSpec, p1: f64, p2: f64) -> Result<f64> {
    let denom = spec.weight(p2)?;
    if denom <= 0.0 {
        return Err(Error::Numeric(format!("zero weight at p = {p2}")));
    }
    Ok(spec.weight(p1)? / denom)
}

/// Formats `v` with 12 significant digits, dropping trailing zeros.
pub fn format_sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.11e}")
    }
}

pub fn curve_csv(curve: &WeightCurve) -> String {
    let mut out = String::from("p,weight\n");
    for &(p, w) in &curve.samples {
        out.push_str(&format_sig12(p));
        out.push(',');
        out.push_str(&format_sig12(w));
        out.push('\n');
    }
    out
}

pub fn export_curve_csv(curve: &WeightCurve, path: &Path) -> Result<()> {
    fs::write(path, curve_csv(curve)).map_err(|e| Error::io(path, e))
}
