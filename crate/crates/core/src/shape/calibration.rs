//! Absolute scale of the marginal estimators.
//!
//! For a unit-variance Gaussian coordinate, `marginal_scale` applied to
//! `A^{1/2} G` converges to a constant `k` that depends on the subordinator
//! and the estimator mode only. Methods 1 and 2 return `k² Σ`; dividing by
//! `k²` puts their output on the scale of Σ.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::robust::{marginal_scale, EstimatorMode};
use crate::sampling::{sample_superstatistical, GaussianSpec, RngSeed, Subordinator};

/// Upper quartile of the standard normal.
const NORMAL_Q75: f64 = 0.674_489_750_196_081_7;

/// `k` where a closed form is available.
pub fn scale_calibration_analytic(sub: Subordinator, mode: EstimatorMode) -> Option<f64> {
    sub.validate().ok()?;
    match (sub, mode) {
        // A^{1/2} G = G / (sqrt(2) |Z|) is Cauchy with scale 1/sqrt(2); both
        // modes are consistent for a Cauchy scale.
        (Subordinator::Stable { alpha }, _) if alpha == 1.0 => Some(FRAC_1_SQRT_2),
        (Subordinator::Student { nu }, _) if nu == 1.0 => Some(1.0),
        (Subordinator::Degenerate { a }, EstimatorMode::Quantile) => Some(a.sqrt() * NORMAL_Q75),
        _ => None,
    }
}

/// `k` from the closed form when known, else from `n_mc` Monte-Carlo draws.
pub fn scale_calibration(
    sub: Subordinator,
    mode: EstimatorMode,
    n_mc: usize,
    seed: RngSeed,
) -> Result<f64> {
    if let Some(k) = scale_calibration_analytic(sub, mode) {
        return Ok(k);
    }
    if n_mc < 1000 {
        return Err(Error::Config(format!(
            "scale calibration needs at least 1000 draws, got {n_mc}"
        )));
    }
    let spec = GaussianSpec::new(Matrix::<f64>::identity(1))?;
    let x = sample_superstatistical(&spec, sub, n_mc, seed)?;
    marginal_scale(x.row(0), mode)
}
