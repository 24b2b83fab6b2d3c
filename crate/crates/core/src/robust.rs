//! Univariate location and scale estimators for heavy-tailed samples.
//!
//! Two families are offered, selected by [`EstimatorMode`]: order
//! statistics (median and half the interquartile range) and a
//! maximum-likelihood Cauchy fit refined from the order-statistic start.
//! Both are scale-equivariant and consistent for Cauchy data, which is what
//! the shape estimators need: only ratios of scales enter downstream.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Minimum sample size accepted by the fits.
pub const MIN_SAMPLES: usize = 8;

const ML_MAX_ITER: usize = 200;
const ML_TOL: f64 = 1e-9;
const MAX_HALVINGS: usize = 40;
const NEWTON_POLISH: f64 = 1e-5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum EstimatorMode {
    Quantile,
    #[default]
    Ml,
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(Self::Quantile),
            "ml" => Ok(Self::Ml),
            other => Err(Error::Config(format!("unknown estimator mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Quantile => "quantile",
            Self::Ml => "ml",
        })
    }
}

/// Location `mu` and scale `gamma > 0` of a Cauchy law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauchyParams<T> {
    pub mu: T,
    pub gamma: T,
}

impl<T: Real> CauchyParams<T> {
    pub fn new(mu: T, gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) || !mu.is_finite() || !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "Cauchy parameters need finite mu and gamma > 0, got ({mu}, {gamma})"
            )));
        }
        Ok(Self { mu, gamma })
    }

    /// Quantile function `mu + gamma·tan(π(p - 1/2))`.
    pub fn quantile(&self, p: T) -> T {
        self.mu + self.gamma * (T::PI() * (p - T::of(0.5))).tan()
    }

    /// Log-likelihood of `samples`, dropping the constant `-n ln π`.
    pub fn log_likelihood(&self, samples: &[T]) -> T {
        log_likelihood(samples, self.mu, self.gamma)
    }
}

/// Result of [`cauchy_fit`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauchyFit<T> {
    pub params: CauchyParams<T>,
    /// ML refinement failed to converge; `params` is the quantile estimate.
    pub ml_fallback: bool,
    pub iterations: usize,
}

fn log_likelihood<T: Real>(samples: &[T], mu: T, gamma: T) -> T {
    let g2 = gamma * gamma;
    let n = T::of_usize(samples.len());
    // one ln per block of four; blocks whose product leaves the normal
    // range are summed term by term
    let mut sum_ln = T::zero();
    for block in samples.chunks(4) {
        let mut prod = T::one();
        for &x in block {
            let r = x - mu;
            prod = prod * (g2 + r * r);
        }
        sum_ln = sum_ln
            + if prod.is_normal() {
                prod.ln()
            } else {
                block.iter().map(|&x| (g2 + (x - mu) * (x - mu)).ln()).sum::<T>()
            };
    }
    n * gamma.ln() - sum_ln
}

fn check_samples<T: Real>(samples: &[T]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: MIN_SAMPLES,
        });
    }
    if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite sample at index {pos}")));
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(Error::DegenerateSample(samples.len()));
    }
    Ok(())
}

fn sorted<T: Real>(samples: &[T]) -> Vec<T> {
    let mut v = samples.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    v
}

/// Type-7 quantile (linear interpolation between order statistics) of an
/// already sorted slice.
pub fn quantile_sorted<T: Real>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = T::of_usize(n - 1) * p;
    let lo = h.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - T::of_usize(lo);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median<T: Real>(samples: &[T]) -> T {
    quantile_sorted(&sorted(samples), T::of(0.5))
}

/// Median and half-IQR, with a mean-absolute-deviation fallback when the
/// interquartile range collapses on heavily tied data.
fn quantile_params<T: Real>(sorted: &[T]) -> CauchyParams<T> {
    let half = T::of(0.5);
    let mu = quantile_sorted(sorted, half);
    let mut gamma = (quantile_sorted(sorted, T::of(0.75)) - quantile_sorted(sorted, T::of(0.25))) * half;
    if !(gamma > T::zero()) {
        gamma = sorted.iter().map(|&x| (x - mu).abs()).sum::<T>() / T::of_usize(sorted.len());
    }
    CauchyParams { mu, gamma }
}

/// Fits a Cauchy law to `samples`.
///
/// `Quantile` returns the sample median and half the interquartile range.
/// `Ml` refines that start by damped Newton ascent on the log-likelihood
/// (Fisher scoring when the Hessian is not negative definite) until both
/// parameter updates fall below `1e-9·(1 + |value|)`; if that does not
/// happen within 200 iterations the quantile estimate is returned with
/// `ml_fallback` set.
pub fn cauchy_fit<T: Real>(samples: &[T], mode: EstimatorMode) -> Result<CauchyFit<T>> {
    check_samples(samples)?;
    let start = quantile_params(&sorted(samples));
    match mode {
        EstimatorMode::Quantile => Ok(CauchyFit {
            params: start,
            ml_fallback: false,
            iterations: 0,
        }),
        EstimatorMode::Ml => {
            let (fit, start_ll) = refine_ml(samples, start);
            // the polishing steps must not undo the ascent guarantee
            if log_likelihood(samples, fit.params.mu, fit.params.gamma) < start_ll {
                return Ok(CauchyFit { params: start, ..fit });
            }
            Ok(fit)
        }
    }
}

/// Returns the fit and the log-likelihood of `start`.
fn refine_ml<T: Real>(samples: &[T], start: CauchyParams<T>) -> (CauchyFit<T>, T) {
    let n = T::of_usize(samples.len());
    let two = T::of(2.0);
    let tol = T::of(ML_TOL).max(T::epsilon() * T::of(64.0));
    let (mut mu, mut gamma) = (start.mu, start.gamma);
    let mut ll = log_likelihood(samples, mu, gamma);
    let start_ll = ll;

    for iter in 1..=ML_MAX_ITER {
        let g2 = gamma * gamma;
        let (mut g_mu, mut g_gamma) = (T::zero(), n / gamma);
        let (mut h_mumu, mut h_mugamma, mut h_gammagamma) = (T::zero(), T::zero(), -n / g2);
        for &x in samples {
            let r = x - mu;
            let r2 = r * r;
            let inv = T::one() / (g2 + r2);
            let inv2 = inv * inv;
            g_mu = g_mu + two * r * inv;
            g_gamma = g_gamma - two * gamma * inv;
            h_mumu = h_mumu + two * (r2 - g2) * inv2;
            h_mugamma = h_mugamma - T::of(4.0) * gamma * r * inv2;
            h_gammagamma = h_gammagamma - two * (r2 - g2) * inv2;
        }

        let det = h_mumu * h_gammagamma - h_mugamma * h_mugamma;
        let newton = h_mumu < T::zero() && det > T::zero();
        let (mut d_mu, mut d_gamma) = if newton {
            (
                -(h_gammagamma * g_mu - h_mugamma * g_gamma) / det,
                -(-h_mugamma * g_mu + h_mumu * g_gamma) / det,
            )
        } else {
            // Fisher information of the Cauchy family is n/(2γ²)·I.
            let step = two * g2 / n;
            (step * g_mu, step * g_gamma)
        };

        // The likelihood is flat to about sqrt(eps) at the optimum, so tiny
        // Newton steps are taken without the ascent check.
        let polish = newton
            && d_mu.abs() < T::of(NEWTON_POLISH) * (T::one() + mu.abs())
            && d_gamma.abs() < T::of(NEWTON_POLISH) * gamma;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let new_gamma = gamma + d_gamma;
            if polish && new_gamma > T::zero() {
                // ll goes stale here; the caller re-evaluates the final fit
                accepted = true;
                mu = mu + d_mu;
                gamma = new_gamma;
                break;
            }
            if new_gamma > T::zero() {
                let new_ll = log_likelihood(samples, mu + d_mu, new_gamma);
                if new_ll >= ll {
                    accepted = true;
                    mu = mu + d_mu;
                    gamma = new_gamma;
                    ll = new_ll;
                    break;
                }
            }
            d_mu = d_mu * T::of(0.5);
            d_gamma = d_gamma * T::of(0.5);
        }

        let small = d_mu.abs() < tol * (T::one() + mu.abs())
            && d_gamma.abs() < tol * (T::one() + gamma.abs());
        if small || !accepted {
            // A step that cannot improve the likelihood means we sit on the
            // optimum to working precision.
            let fit = CauchyFit {
                params: CauchyParams { mu, gamma },
                ml_fallback: false,
                iterations: iter,
            };
            return (fit, start_ll);
        }
    }
    let fit = CauchyFit {
        params: start,
        ml_fallback: true,
        iterations: ML_MAX_ITER,
    };
    (fit, start_ll)
}

/// Scale-only ML fit of a zero-centred Cauchy law, i.e. the ML fit of the
/// symmetrized sample `{x, -x}` whose location is 0 by construction.
///
/// The score `Σ (x² - γ²)/(x² + γ²)` is strictly decreasing in `γ`, so the
/// root is unique; Newton steps are safeguarded by a bisection bracket.
fn symmetric_ml_scale<T: Real>(row: &[T], start: T) -> Result<T> {
    let score = |g: T| {
        let g2 = g * g;
        row.iter()
            .map(|&x| {
                let x2 = x * x;
                (x2 - g2) / (x2 + g2)
            })
            .sum::<T>()
    };
    let zeros = row.iter().filter(|&&x| x == T::zero()).count();
    if 2 * zeros >= row.len() {
        return Err(Error::DegenerateSample(row.len()));
    }
    let tol = T::of(ML_TOL).max(T::epsilon() * T::of(64.0));

    let (mut lo, mut hi) = (start, start);
    while score(lo) < T::zero() {
        lo = lo * T::of(0.5);
    }
    while score(hi) > T::zero() {
        hi = hi * T::of(2.0);
    }
    let mut g = start.max(lo).min(hi);
    for _ in 0..ML_MAX_ITER {
        let g2 = g * g;
        let (mut f, mut df) = (T::zero(), T::zero());
        for &x in row {
            let x2 = x * x;
            let q = x2 + g2;
            f = f + (x2 - g2) / q;
            df = df - T::of(4.0) * g * x2 / (q * q);
        }
        if f > T::zero() {
            lo = g;
        } else {
            hi = g;
        }
        let mut next = if df < T::zero() { g - f / df } else { g };
        if !(next > lo && next < hi) {
            next = (lo + hi) * T::of(0.5);
        }
        let done = (next - g).abs() < tol * (T::one() + g);
        g = next;
        if done || hi - lo < tol * (T::one() + lo) {
            return Ok(g);
        }
    }
    Ok(g)
}

/// Dispersion of one coordinate, equivariant under `x ↦ c·x`.
///
/// `Quantile`: half the interquartile range of `row`. `Ml`: Cauchy ML scale
/// of the symmetrized row.
pub fn marginal_scale<T: Real>(row: &[T], mode: EstimatorMode) -> Result<T> {
    check_samples(row)?;
    let sorted_row = sorted(row);
    let start = quantile_params(&sorted_row).gamma;
    match mode {
        EstimatorMode::Quantile => Ok(start),
        EstimatorMode::Ml => {
            let abs: Vec<T> = row.iter().map(|x| x.abs()).collect();
            let init = median(&abs);
            symmetric_ml_scale(row, if init > T::zero() { init } else { start })
        }
    }
}

/// Per-row scales of a data matrix, rows evaluated in parallel.
pub fn marginal_scales<T: Real>(x: &Matrix<T>, mode: EstimatorMode) -> Result<Vec<T>> {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| marginal_scale(x.row(i), mode))
        .collect()
}

/// Per-row location (median or Cauchy-ML location): the robust "average"
/// sample subtracted before heavy-tailed PCA. A constant row (a blank
/// pixel, say) is its own location, but a matrix without spread in any row
/// is a degenerate sample.
pub fn location_vector<T: Real>(x: &Matrix<T>, mode: EstimatorMode) -> Result<Vec<T>> {
    let constant = |row: &[T]| row.iter().all(|&w| w == row[0]);
    if x.ncols() > 0 && x.rows_iter().all(constant) {
        return Err(Error::DegenerateSample(x.ncols()));
    }
    (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            match row.first() {
                Some(&v) if row.len() >= MIN_SAMPLES && row.iter().all(|&w| w == v) => Ok(v),
                _ => cauchy_fit(row, mode).map(|f| f.params.mu),
            }
        })
        .collect()
}
