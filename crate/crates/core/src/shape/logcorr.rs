//! Log-correlation estimator.
//!
//! For `X = A^{1/2} G` the products `log|X_i| log|X_j|` separate into a
//! subordinator part and the Gaussian log-correlation
//! `ℓ(ρ) = E[log|G_i| log|G_j|]`, which is a strictly increasing function
//! of `|ρ|` for unit-variance coordinates. Inverting a tabulated `ℓ(ρ)`
//! recovers `|ρ|`.

use std::f64::consts::{LN_2, PI};
use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::ratio::{assemble, pairs, RatioFitter};
use super::{Diagnostics, Estimate};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::robust::{EstimatorMode, MIN_SAMPLES};
use crate::sampling::{sample_subordinator, RngSeed, Subordinator};
use crate::scalar::{Real, EULER_GAMMA};
use crate::special::{digamma, trigamma};

/// `E[log|G|]` for a standard normal `G`: `-(γ_E + ln 2)/2`.
pub const LOG_ABS_GAUSSIAN_MEAN: f64 = -(EULER_GAMMA + LN_2) / 2.0;
/// Below this `|ρ̂|` the log-correlation estimate is flagged unreliable.
pub const UNRELIABLE_RHO: f64 = 0.3;
/// Minimum Monte-Carlo draws for [`subordinator_log_moments`].
pub const MIN_LOG_MOMENT_DRAWS: usize = 1_000_000;

const MIN_ORDER: usize = 64;
const MAX_STEP: f64 = 1e-2;
const TANH_SINH_SPAN: f64 = 4.0;

/// Monotone table `ρ ↦ E[log|G_1| log|G_2|]` on `[0, 1]` for a
/// unit-variance bivariate normal pair with correlation `ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogLut<T> {
    pub rho_grid: Vec<T>,
    pub ell_values: Vec<T>,
    pub step: T,
    pub order: usize,
}

impl<T: Real> LogLut<T> {
    /// Linear-interpolation inverse of the table. Returns `|ρ|` and whether
    /// `ell` fell outside the tabulated range (and was clamped to 0 or 1).
    pub fn invert(&self, ell: T) -> (T, bool) {
        let n = self.ell_values.len();
        if ell <= self.ell_values[0] {
            return (self.rho_grid[0], ell < self.ell_values[0]);
        }
        if ell >= self.ell_values[n - 1] {
            return (self.rho_grid[n - 1], ell > self.ell_values[n - 1]);
        }
        let hi = self.ell_values.partition_point(|&v| v < ell);
        let lo = hi - 1;
        let (e0, e1) = (self.ell_values[lo], self.ell_values[hi]);
        let (r0, r1) = (self.rho_grid[lo], self.rho_grid[hi]);
        (r0 + (r1 - r0) * (ell - e0) / (e1 - e0), false)
    }

    /// Linear interpolation of `ℓ` at `rho ∈ [0, 1]`.
    pub fn ell_at(&self, rho: T) -> T {
        let rho = rho.abs().min(T::one());
        let hi = self.rho_grid.partition_point(|&r| r < rho).max(1);
        let lo = hi - 1;
        let (r0, r1) = (self.rho_grid[lo], self.rho_grid[hi]);
        let (e0, e1) = (self.ell_values[lo], self.ell_values[hi]);
        e0 + (e1 - e0) * (rho - r0) / (r1 - r0)
    }

    /// Writes `rho,ell,quadrature_order=<order>` followed by one row per
    /// grid point, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rho,ell,quadrature_order={}", self.order)?;
        for (r, e) in self.rho_grid.iter().zip(&self.ell_values) {
            writeln!(w, "{:.16e},{:.16e}", r.to_f64_lossy(), e.to_f64_lossy())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Input("empty lookup-table file".into()))?
            .map_err(|e| Error::Input(e.to_string()))?;
        let order = header
            .trim()
            .strip_prefix("rho,ell,quadrature_order=")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::Input(format!("line 1: bad lookup-table header `{header}`")))?;
        let (mut rho_grid, mut ell_values) = (Vec::new(), Vec::new());
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Input(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<T> {
                s.and_then(|v| v.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .map(T::of)
                    .ok_or_else(|| Error::Input(format!("line {}: malformed row `{line}`", k + 2)))
            };
            let mut parts = line.split(',');
            rho_grid.push(parse(parts.next())?);
            ell_values.push(parse(parts.next())?);
        }
        if rho_grid.len() < 2 {
            return Err(Error::Input("lookup table needs at least two rows".into()));
        }
        if let Some(index) = ell_values.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneTable { index: index + 1 });
        }
        let step = rho_grid[1] - rho_grid[0];
        Ok(Self {
            rho_grid,
            ell_values,
            step,
            order,
        })
    }
}

/// Tanh-sinh rule on an interval of length `len`, yielding for each node
/// its distances to the left and right endpoints and its weight. Returning
/// distances rather than abscissae keeps full relative precision next to
/// endpoint singularities.
fn tanh_sinh_nodes(len: f64, order: usize) -> Vec<(f64, f64, f64)> {
    let half = (order / 2).max(1) as i64;
    let h = TANH_SINH_SPAN / half as f64;
    (-half..=half)
        .map(|k| {
            let t = k as f64 * h;
            let s = PI / 2.0 * t.sinh();
            let dl = len / (1.0 + (-2.0 * s).exp());
            let dr = len / (1.0 + (2.0 * s).exp());
            let ch = s.cosh();
            let w = h * len / 2.0 * (PI / 2.0) * t.cosh() / (ch * ch);
            (dl, dr, w)
        })
        .filter(|&(dl, dr, w)| dl > 0.0 && dr > 0.0 && w > 0.0)
        .collect()
}

/// `(1/π) ∫_0^π ln|sin u| ln|sin(u - φ)| du` for `φ ∈ [0, π/2]`.
///
/// The integrand is singular at `u = 0, φ, π`; splitting at `φ` leaves
/// endpoint singularities only, which tanh-sinh handles at its usual rate.
fn angular_log_product(phi: f64, order: usize) -> f64 {
    // On either piece the two factors are ln sin(dl) and ln sin(dr), with dl
    // and dr the distances to the piece's endpoints. A distance beyond π/2
    // is folded back through sin(x) = sin(π - x) = sin(φ + other).
    let piece = |len: f64| -> f64 {
        if len <= 0.0 {
            return 0.0;
        }
        tanh_sinh_nodes(len, order)
            .into_iter()
            .map(|(dl, dr, w)| {
                let fold = |a: f64, b: f64| if a <= PI / 2.0 { a.sin() } else { (phi + b).sin() };
                w * fold(dl, dr).ln() * fold(dr, dl).ln()
            })
            .sum()
    };
    (piece(phi) + piece(PI - phi)) / PI
}

/// `E[log|G_1| log|G_2|]` for a unit-variance bivariate normal with
/// correlation `rho`.
///
/// Writing the whitened pair in polar form, `G_1 = R cos θ` and
/// `G_2 = R cos(θ - φ)` with `cos φ = ρ`, where `R² ~ χ²_2` and `θ` is
/// uniform and independent of `R`. The radial log-moments are exact
/// (`E ln R = (ln 2 - γ_E)/2`, `Var ln R = π²/24`) and the angular mean is
/// integrated numerically with `order` nodes per sub-interval.
pub fn log_correlation_quadrature(rho: f64, order: usize) -> f64 {
    let rho = rho.abs().min(1.0);
    let phi = rho.acos();
    let e_log_r = 0.5 * (LN_2 - EULER_GAMMA);
    let e_log_r_sq = e_log_r * e_log_r + PI * PI / 24.0;
    // E[ln|cos θ|] = -ln 2
    e_log_r_sq - 2.0 * LN_2 * e_log_r + angular_log_product(phi, order)
}

/// Tabulates `ℓ(ρ)` on `[0, 1]` with spacing `step` (the last cell may be
/// shorter so that `ρ = 1` is always a node).
pub fn build_log_lut<T: Real>(step: f64, order: usize) -> Result<LogLut<T>> {
    if !(step > 0.0 && step <= MAX_STEP) {
        return Err(Error::Config(format!(
            "lookup-table step must be in (0, {MAX_STEP}], got {step}"
        )));
    }
    if order < MIN_ORDER {
        return Err(Error::Config(format!(
            "quadrature order must be at least {MIN_ORDER}, got {order}"
        )));
    }
    let cells = (1.0 / step - 1e-9).ceil() as usize;
    let rho_grid: Vec<f64> = (0..=cells).map(|k| (k as f64 * step).min(1.0)).collect();
    let ell: Vec<f64> = rho_grid
        .par_iter()
        .map(|&r| log_correlation_quadrature(r, order))
        .collect();
    if let Some(index) = ell.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotoneTable { index: index + 1 });
    }
    Ok(LogLut {
        rho_grid: rho_grid.into_iter().map(T::of).collect(),
        ell_values: ell.into_iter().map(T::of).collect(),
        step: T::of(step),
        order,
    })
}

/// Log-moments of the subordinator entering the log-correlation identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubordinatorLogMoments {
    /// `E[log A]`
    pub e_log_a: f64,
    /// `E[(log A)²]`
    pub e_log_a_sq: f64,
    /// `E[log|G|]` for a standard normal, always [`LOG_ABS_GAUSSIAN_MEAN`].
    pub e_log_abs_g: f64,
    /// Monte-Carlo standard errors of the two moments (0 when exact).
    pub se_log_a: f64,
    pub se_log_a_sq: f64,
}

impl SubordinatorLogMoments {
    fn exact(e_log_a: f64, var_log_a: f64) -> Self {
        Self {
            e_log_a,
            e_log_a_sq: var_log_a + e_log_a * e_log_a,
            e_log_abs_g: LOG_ABS_GAUSSIAN_MEAN,
            se_log_a: 0.0,
            se_log_a_sq: 0.0,
        }
    }

    /// Closed-form log-moments.
    ///
    /// * degenerate `a`: `log a`, variance 0;
    /// * Student `ν` (`A = ν/U`, `U ~ χ²_ν`): mean `ln ν - ψ(ν/2) - ln 2`,
    ///   variance `ψ'(ν/2)`;
    /// * stable `α`: the subordinator has Laplace transform `exp(-s^{α/2})`,
    ///   giving mean `γ_E (2/α - 1)` and variance `(π²/6)(4/α² - 1)`.
    pub fn analytic(sub: Subordinator) -> Result<Self> {
        sub.validate()?;
        Ok(match sub {
            Subordinator::Degenerate { a } => Self::exact(a.ln(), 0.0),
            Subordinator::Student { nu } => {
                Self::exact(nu.ln() - digamma(nu / 2.0) - LN_2, trigamma(nu / 2.0))
            }
            Subordinator::Stable { alpha } => Self::exact(
                EULER_GAMMA * (2.0 / alpha - 1.0),
                PI * PI / 6.0 * (4.0 / (alpha * alpha) - 1.0),
            ),
        })
    }

    pub fn var_log_a(&self) -> f64 {
        self.e_log_a_sq - self.e_log_a * self.e_log_a
    }

    /// CSV with a header row and one value row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "e_log_a,e_log_a_sq,e_log_abs_g,se_log_a,se_log_a_sq")?;
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.e_log_a, self.e_log_a_sq, self.e_log_abs_g, self.se_log_a, self.se_log_a_sq
        )
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().map(|l| l.map_err(|e| Error::Input(e.to_string())));
        let header = lines
            .next()
            .ok_or_else(|| Error::Input("empty log-moments file".into()))??;
        if header.trim() != "e_log_a,e_log_a_sq,e_log_abs_g,se_log_a,se_log_a_sq" {
            return Err(Error::Input(format!("line 1: bad log-moments header `{header}`")));
        }
        let row = lines
            .next()
            .ok_or_else(|| Error::Input("line 2: missing log-moments row".into()))??;
        let v: Vec<f64> = row
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("line 2: {e}")))?;
        if v.len() != 5 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("line 2: expected five finite values".into()));
        }
        Ok(Self {
            e_log_a: v[0],
            e_log_a_sq: v[1],
            e_log_abs_g: v[2],
            se_log_a: v[3],
            se_log_a_sq: v[4],
        })
    }
}

/// Monte-Carlo log-moments of `sub` from `n_mc` draws, with standard
/// errors. The degenerate kind is returned exactly.
pub fn subordinator_log_moments(
    sub: Subordinator,
    n_mc: usize,
    seed: RngSeed,
) -> Result<SubordinatorLogMoments> {
    if let Subordinator::Degenerate { .. } = sub {
        return SubordinatorLogMoments::analytic(sub);
    }
    if n_mc < MIN_LOG_MOMENT_DRAWS {
        return Err(Error::Config(format!(
            "Monte-Carlo log-moments need at least {MIN_LOG_MOMENT_DRAWS} draws, got {n_mc}"
        )));
    }
    const CHUNK: usize = 1 << 16;
    let chunks = n_mc.div_ceil(CHUNK);
    // Fixed-size chunks with their own substreams keep the result independent
    // of the thread count.
    let partial: Vec<[f64; 4]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n_mc - c * CHUNK);
            let draws = sample_subordinator(sub, len, seed.substream(c as u64))?;
            let mut acc = [0.0; 4];
            for a in draws {
                let l = a.ln();
                let l2 = l * l;
                acc[0] += l;
                acc[1] += l2;
                acc[2] += l * l;
                acc[3] += l2 * l2;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut s = [0.0; 4];
    for p in &partial {
        for k in 0..4 {
            s[k] += p[k];
        }
    }
    let n = n_mc as f64;
    let m1 = s[0] / n;
    let m2 = s[1] / n;
    let var1 = (s[2] / n - m1 * m1).max(0.0);
    let var2 = (s[3] / n - m2 * m2).max(0.0);
    Ok(SubordinatorLogMoments {
        e_log_a: m1,
        e_log_a_sq: m2,
        e_log_abs_g: LOG_ABS_GAUSSIAN_MEAN,
        se_log_a: (var1 / n).sqrt(),
        se_log_a_sq: (var2 / n).sqrt(),
    })
}

/// Empirical Gaussian log-correlation of every pair.
///
/// With each row normalized by its marginal scale `s_i`, the log-data is
/// `L_i = ½ log A + log|G_i| - log k_i` where `k_i` is the (unknown) ratio
/// between `s_i` and the standard deviation of `G_i`. Re-centring the
/// subordinator moments by each row's empirical log-mean
/// `m_i = ½ E[log A] + E[log|G|] - log k_i` turns the identity
/// `E[L_i L_j] = ¼E[(log A')²] + E[log A'] E[log|G|] + ℓ_G` into
/// `ℓ_G = mean(L_i L_j) - m_i m_j - ¼ Var(log A) + E[log|G|]²`.
fn empirical_gaussian_log_correlations<T: Real>(
    x: &Matrix<T>,
    scales: &[T],
    moments: &SubordinatorLogMoments,
    pairs: &[(usize, usize)],
) -> Result<Vec<T>> {
    let (d, n) = x.shape();
    let logs: Vec<Vec<Option<f64>>> = (0..d)
        .map(|i| {
            let s = scales[i].to_f64_lossy();
            x.row(i)
                .iter()
                .map(|&v| {
                    let v = v.to_f64_lossy();
                    (v != 0.0).then(|| (v / s).abs().ln())
                })
                .collect()
        })
        .collect();
    for (row, l) in logs.iter().enumerate() {
        let excluded = l.iter().filter(|v| v.is_none()).count();
        if 2 * excluded > n {
            return Err(Error::IllConditionedRow {
                row,
                excluded,
                total: n,
            });
        }
    }
    let offset = moments.e_log_abs_g * moments.e_log_abs_g - 0.25 * moments.var_log_a();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let (mut si, mut sj, mut sij, mut count) = (0.0, 0.0, 0.0, 0usize);
            for (a, b) in logs[i].iter().zip(&logs[j]) {
                if let (Some(a), Some(b)) = (a, b) {
                    si += a;
                    sj += b;
                    sij += a * b;
                    count += 1;
                }
            }
            if count < MIN_SAMPLES {
                return Err(Error::TooFewSamples {
                    got: count,
                    need: MIN_SAMPLES,
                });
            }
            let c = count as f64;
            Ok(T::of(sij / c - (si / c) * (sj / c) + offset))
        })
        .collect()
}

/// Log-correlation shape estimate.
///
/// `|ρ_ij|` comes from inverting `lut` at the empirical Gaussian
/// log-correlation; its sign is the sign of the Cauchy location of
/// `x_i / x_j`. Missing `moments` is a configuration error.
pub fn estimate_shape_method2<T: Real>(
    x: &Matrix<T>,
    lut: &LogLut<T>,
    moments: Option<&SubordinatorLogMoments>,
    mode: EstimatorMode,
) -> Result<Estimate<T>> {
    let moments = moments.ok_or_else(|| {
        Error::Config("the log-correlation estimator needs subordinator log-moments".into())
    })?;
    let fitter = RatioFitter::new(x, mode)?;
    let pairs = pairs(x.nrows());
    let ells = empirical_gaussian_log_correlations(x, &fitter.scales, moments, &pairs)?;

    let per_pair: Vec<(T, bool, bool)> = pairs
        .par_iter()
        .zip(&ells)
        .map(|(&(i, j), &ell)| {
            let (i, j) = fitter.orient(i, j);
            let fit = fitter.fit(i, j)?;
            let (magnitude, clamped) = lut.invert(ell);
            let rho = if fit.params.mu < T::zero() {
                -magnitude
            } else {
                magnitude
            };
            Ok((rho, clamped, fit.ml_fallback))
        })
        .collect::<Result<_>>()?;

    let mut diagnostics = Diagnostics {
        pairs: pairs.len(),
        ..Default::default()
    };
    let threshold = T::of(UNRELIABLE_RHO);
    let rhos: Vec<T> = per_pair
        .into_iter()
        .map(|(rho, clamped, fallback)| {
            diagnostics.clamped += clamped as usize;
            diagnostics.ml_fallbacks += fallback as usize;
            diagnostics.unreliable_pairs += (rho.abs() < threshold) as usize;
            rho
        })
        .collect();
    let shape = assemble(&fitter.scales, &pairs, &rhos)?;
    Ok(Estimate {
        shape,
        diagnostics: diagnostics.finish(),
    })
}
