//! Ratio-of-marginals estimator.
//!
//! Dividing coordinate `i` by coordinate `j` cancels the common factor
//! `A^{1/2}`; the ratio of the two Gaussian coordinates is Cauchy with
//! location `μ = ρ σ_i/σ_j` and scale `γ = (σ_i/σ_j) sqrt(1 - ρ²)`. Each
//! pair's correlation is read off a Cauchy fit of the ratio sample.

use std::str::FromStr;

use rayon::prelude::*;

use super::{Diagnostics, Estimate, ShapeMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::robust::{cauchy_fit, marginal_scales, CauchyFit, CauchyParams, EstimatorMode, MIN_SAMPLES};
use crate::scalar::Real;

/// Relative denominator guard: `|x_j| <= 1e-12·scale_j` is excluded.
const DENOMINATOR_GUARD: f64 = 1e-12;
/// Formula B inputs with `(σ_j/σ_i)² γ² > 1 + 0.25` are domain violations.
const FORMULA_B_SLACK: f64 = 0.25;

/// Which closed form turns the ratio's Cauchy parameters into `ρ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RatioFormula {
    /// `μ / sqrt(μ² + γ²)`
    A,
    /// `sgn(μ) sqrt(1 - (σ_j/σ_i)² γ²)`
    B,
    /// `μ σ_j / σ_i`
    C,
}

impl FromStr for RatioFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            other => Err(Error::Config(format!("unknown ratio formula `{other}`"))),
        }
    }
}

/// Correlation estimate with the flags raised while computing it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoEstimate<T> {
    pub rho: T,
    pub clamped: bool,
    pub domain_violation: bool,
}

/// Correlation from the Cauchy parameters of `x_i / x_j` and the marginal
/// scales `si`, `sj` (only formulas B and C use the scales).
pub fn rho_from_ratio<T: Real>(
    cp: &CauchyParams<T>,
    si: T,
    sj: T,
    formula: RatioFormula,
) -> RhoEstimate<T> {
    let (mu, gamma) = (cp.mu, cp.gamma);
    let mut out = RhoEstimate {
        rho: T::zero(),
        clamped: false,
        domain_violation: false,
    };
    match formula {
        RatioFormula::A => {
            let norm = (mu * mu + gamma * gamma).sqrt();
            if norm > T::zero() {
                out.rho = mu / norm;
            }
        }
        RatioFormula::B => {
            let ratio = sj / si;
            let excess = ratio * ratio * gamma * gamma;
            let sign = if mu > T::zero() {
                T::one()
            } else if mu < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            if excess > T::one() + T::of(FORMULA_B_SLACK) {
                out.domain_violation = true;
            } else if excess > T::one() {
                out.clamped = true;
            } else {
                out.rho = sign * (T::one() - excess).sqrt();
            }
        }
        RatioFormula::C => {
            let raw = mu * sj / si;
            out.rho = raw.max(-T::one()).min(T::one());
            out.clamped = raw != out.rho;
        }
    }
    out
}

/// Shared per-matrix state for pairwise ratio fits.
pub(super) struct RatioFitter<'a, T> {
    x: &'a Matrix<T>,
    pub scales: Vec<T>,
    guards: Vec<T>,
    mode: EstimatorMode,
}

impl<'a, T: Real> RatioFitter<'a, T> {
    pub fn new(x: &'a Matrix<T>, mode: EstimatorMode) -> Result<Self> {
        let (d, n) = x.shape();
        if d < 2 {
            return Err(Error::DimensionTooSmall { got: d, min: 2 });
        }
        if n < MIN_SAMPLES {
            return Err(Error::TooFewSamples {
                got: n,
                need: MIN_SAMPLES,
            });
        }
        let scales = marginal_scales(x, mode)?;
        let guards: Vec<T> = scales.iter().map(|&s| s * T::of(DENOMINATOR_GUARD)).collect();
        for (row, &guard) in guards.iter().enumerate() {
            let excluded = x.row(row).iter().filter(|v| v.abs() <= guard).count();
            if 2 * excluded > n {
                return Err(Error::IllConditionedRow {
                    row,
                    excluded,
                    total: n,
                });
            }
        }
        Ok(Self {
            x,
            scales,
            guards,
            mode,
        })
    }

    /// Orders a pair as `(numerator, denominator)`: the row with the larger
    /// marginal scale goes on top, ties by index. The choice depends on the
    /// data only, so relabelling the rows does not change any fit.
    pub fn orient(&self, i: usize, j: usize) -> (usize, usize) {
        if self.scales[j] > self.scales[i] {
            (j, i)
        } else {
            (i, j)
        }
    }

    /// Cauchy fit of `x_i / x_j` over samples passing the denominator guard.
    pub fn fit(&self, i: usize, j: usize) -> Result<CauchyFit<T>> {
        let guard = self.guards[j];
        let ratios: Vec<T> = self
            .x
            .row(i)
            .iter()
            .zip(self.x.row(j))
            .filter(|(_, &den)| den.abs() > guard)
            .map(|(&num, &den)| num / den)
            .collect();
        cauchy_fit(&ratios, self.mode)
    }
}

/// Upper-triangle index pairs `(i, j)`, `i < j`, in row-major order.
pub(super) fn pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .collect()
}

/// Assembles `s_i s_j ρ_ij` with diagonal `s_i²` and projects onto the PSD
/// cone.
pub(super) fn assemble<T: Real>(
    scales: &[T],
    pairs: &[(usize, usize)],
    rhos: &[T],
) -> Result<ShapeMatrix<T>> {
    let d = scales.len();
    let mut m = Matrix::zeros(d, d);
    for (i, &s) in scales.iter().enumerate() {
        m[(i, i)] = s * s;
    }
    for (&(i, j), &rho) in pairs.iter().zip(rhos) {
        let v = scales[i] * scales[j] * rho;
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    ShapeMatrix::psd_projected(m)
}

/// Ratio-of-marginals shape estimate.
///
/// Diagonal entries are squared marginal scales, which equal `Σ_ii` up to
/// one constant shared by all coordinates.
pub fn estimate_shape_method1<T: Real>(
    x: &Matrix<T>,
    formula: RatioFormula,
    mode: EstimatorMode,
) -> Result<Estimate<T>> {
    let fitter = RatioFitter::new(x, mode)?;
    let pairs = pairs(x.nrows());
    let fits: Vec<(RhoEstimate<T>, bool)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (i, j) = fitter.orient(i, j);
            let fit = fitter.fit(i, j)?;
            let est = rho_from_ratio(&fit.params, fitter.scales[i], fitter.scales[j], formula);
            Ok((est, fit.ml_fallback))
        })
        .collect::<Result<_>>()?;

    let mut diagnostics = Diagnostics {
        pairs: pairs.len(),
        ..Default::default()
    };
    let rhos: Vec<T> = fits
        .iter()
        .map(|(est, fallback)| {
            diagnostics.clamped += est.clamped as usize;
            diagnostics.domain_violations += est.domain_violation as usize;
            diagnostics.ml_fallbacks += *fallback as usize;
            est.rho
        })
        .collect();
    if diagnostics.domain_violations > 0 {
        diagnostics.warnings.push(format!(
            "{} pairs fell outside the domain of formula B and were set to 0",
            diagnostics.domain_violations
        ));
    }
    let shape = assemble(&fitter.scales, &pairs, &rhos)?;
    Ok(Estimate {
        shape,
        diagnostics: diagnostics.finish(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_params(si: f64, sj: f64, rho: f64) -> CauchyParams<f64> {
        CauchyParams {
            mu: rho * si / sj,
            gamma: si / sj * (1.0 - rho * rho).sqrt(),
        }
    }

    #[test]
    fn independence_gives_zero() {
        for gamma in [0.3, 1.0, 5.0] {
            let cp = CauchyParams { mu: 0.0, gamma };
            for f in [RatioFormula::A, RatioFormula::C] {
                assert_eq!(rho_from_ratio(&cp, 2.0, 2.0, f).rho, 0.0);
            }
        }
        let cp = CauchyParams { mu: 0.0, gamma: 1.0 };
        let b = rho_from_ratio(&cp, 2.0, 2.0, RatioFormula::B);
        assert_eq!(b.rho, 0.0);
        assert!(!b.domain_violation);
    }

    #[test]
    fn exact_inputs_recover_rho() {
        let cp = exact_params(4.0, 2.0, 0.6);
        assert!((cp.mu - 1.2).abs() < 1e-15 && (cp.gamma - 1.6).abs() < 1e-15);
        for f in [RatioFormula::A, RatioFormula::B, RatioFormula::C] {
            let r = rho_from_ratio(&cp, 4.0, 2.0, f).rho;
            assert!((r - 0.6).abs() < 1e-12, "{f:?}: {r}");
        }
    }

    #[test]
    fn perfect_correlation() {
        let cp = CauchyParams { mu: 2.0, gamma: 0.0 };
        for f in [RatioFormula::A, RatioFormula::C] {
            assert_eq!(rho_from_ratio(&cp, 4.0, 2.0, f).rho, 1.0);
        }
        let cp = CauchyParams { mu: -2.0, gamma: 0.0 };
        assert_eq!(rho_from_ratio(&cp, 4.0, 2.0, RatioFormula::A).rho, -1.0);
    }

    #[test]
    fn formula_b_domain_handling() {
        let cp = CauchyParams { mu: 0.5, gamma: 1.05 };
        let r = rho_from_ratio(&cp, 1.0, 1.0, RatioFormula::B);
        assert!(r.clamped && !r.domain_violation && r.rho == 0.0);
        let cp = CauchyParams { mu: 0.5, gamma: 1.2 };
        let r = rho_from_ratio(&cp, 1.0, 1.0, RatioFormula::B);
        assert!(r.domain_violation && r.rho == 0.0);
    }

    #[test]
    fn formula_c_clamps() {
        let cp = CauchyParams { mu: 3.0, gamma: 0.1 };
        let r = rho_from_ratio(&cp, 1.0, 1.0, RatioFormula::C);
        assert_eq!(r.rho, 1.0);
        assert!(r.clamped);
    }

    #[test]
    fn zero_heavy_row_is_ill_conditioned() {
        let mut x = Matrix::from_fn(3, 20, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.5);
        for j in 0..11 {
            x[(1, j)] = 0.0;
        }
        match estimate_shape_method1(&x, RatioFormula::C, EstimatorMode::Quantile) {
            Err(Error::IllConditionedRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected ill-conditioned row, got {other:?}"),
        }
    }

    #[test]
    fn pair_enumeration() {
        assert_eq!(pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert!(pairs(1).is_empty());
    }
}
