//! Replicated Monte-Carlo studies: correlation sweeps, first-component
//! recovery and entrywise bias/RMSE.
//!
//! Every replicate draws from its own substream of the configured seed and
//! results are gathered in replicate order, so outputs do not depend on the
//! number of worker threads.

use std::fmt::Write as _;

use rayon::prelude::*;

use htpca_core::linalg::{sym_eigen, Matrix};
use htpca_core::pca::{fit_classical_pca, fit_heavy_pca, pc1_agreement};
use htpca_core::robust::EstimatorMode;
use htpca_core::sampling::{sample_superstatistical, GaussianSpec, RngSeed, Subordinator};
use htpca_core::shape::{scale_calibration, ShapeMethod};
use htpca_core::{Error, Result};

use crate::config::{
    sweep_sigma, ExperimentConfig, ExperimentKind, MethodName, MethodResources, SigmaSource,
};

/// Draws used to calibrate the marginal scale when no closed form exists.
pub const CALIBRATION_DRAWS: usize = 1_000_000;

fn check_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    cfg.validate()?;
    if cfg.kind != kind {
        return Err(Error::Config(format!(
            "expected a {} configuration, got {}",
            kind.as_str(),
            cfg.kind.as_str()
        )));
    }
    Ok(())
}

/// Methods that can run at dimension `d`, plus notes about the ones that
/// were dropped.
fn usable_methods(methods: &[MethodName], d: usize) -> (Vec<MethodName>, Vec<String>) {
    let mut keep = Vec::new();
    let mut notes = Vec::new();
    for &m in methods {
        if m == MethodName::M3 && d < htpca_core::shape::METHOD3_MIN_DIM {
            notes.push(format!("m3 skipped: dimension {d} is below its minimum"));
        } else if !keep.contains(&m) {
            keep.push(m);
        }
    }
    (keep, notes)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One (ρ, method) cell of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub rho: f64,
    pub method: MethodName,
    /// `100 · |mean(ρ̂) - ρ| / ρ`, the error of the run-averaged estimate.
    pub rel_error_pct: f64,
    /// Standard error of `rel_error_pct` from the spread of ρ̂ over runs.
    pub se_pct: f64,
    /// `100 · mean(|ρ̂ - ρ|) / ρ`, the typical single-run error.
    pub mean_abs_rel_error_pct: f64,
    pub mean_rho_hat: f64,
    pub clamped: usize,
    pub domain_violations: usize,
    pub unreliable: usize,
    pub runs: usize,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub notes: Vec<String>,
}

impl SweepResult {
    pub fn row(&self, rho: f64, method: MethodName) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && (r.rho - rho).abs() < 1e-12)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "rho,method,rel_error_pct,se_pct,mean_abs_rel_error_pct,mean_rho_hat,clamped,domain_violations,unreliable,runs\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.rho,
                r.method,
                r.rel_error_pct,
                r.se_pct,
                r.mean_abs_rel_error_pct,
                r.mean_rho_hat,
                r.clamped,
                r.domain_violations,
                r.unreliable,
                r.runs
            );
        }
        s
    }
}

#[derive(Clone, Copy, Default)]
struct RunStats {
    rho_hat: f64,
    clamped: usize,
    domain_violations: usize,
    unreliable: usize,
}

/// Correlation sweep over `[[16, 8ρ], [8ρ, 4]]`.
///
/// Each run draws one data set per ρ and feeds it to every method, which
/// returns `ρ̂ = Σ̂₁₂ / sqrt(Σ̂₁₁ Σ̂₂₂)`.
pub fn run_rho_sweep(cfg: &ExperimentConfig, resources: &MethodResources) -> Result<SweepResult> {
    check_kind(cfg, ExperimentKind::RhoSweep)?;
    if cfg.sigma != SigmaSource::SweepFamily {
        return Err(Error::Config("the sweep uses the built-in two-dimensional family".into()));
    }
    let (methods, notes) = usable_methods(&cfg.methods, 2);
    let estimators: Vec<ShapeMethod<f64>> = methods
        .iter()
        .map(|&m| resources.method(m))
        .collect::<Result<_>>()?;
    let specs: Vec<GaussianSpec<f64>> = cfg
        .rho_grid
        .iter()
        .map(|&r| GaussianSpec::new(sweep_sigma(r)))
        .collect::<Result<_>>()?;

    let root = RngSeed::new(cfg.seed);
    let jobs: Vec<(usize, usize)> = (0..cfg.rho_grid.len())
        .flat_map(|g| (0..cfg.n_runs).map(move |r| (g, r)))
        .collect();
    let results: Vec<Vec<RunStats>> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let seed = root.substream(g as u64).substream(r as u64);
            let x = sample_superstatistical(&specs[g], cfg.subordinator, cfg.n, seed)?;
            estimators
                .iter()
                .map(|est| {
                    let e = est.estimate(&x, cfg.mode)?;
                    Ok(RunStats {
                        rho_hat: e.shape.correlation(0, 1),
                        clamped: e.diagnostics.clamped,
                        domain_violations: e.diagnostics.domain_violations,
                        unreliable: e.diagnostics.unreliable_pairs,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (g, &rho) in cfg.rho_grid.iter().enumerate() {
        let block = &results[g * cfg.n_runs..(g + 1) * cfg.n_runs];
        for (k, &method) in methods.iter().enumerate() {
            let stats: Vec<RunStats> = block.iter().map(|run| run[k]).collect();
            let hats: Vec<f64> = stats.iter().map(|s| s.rho_hat).collect();
            let (mean, se) = mean_and_se(&hats);
            let abs_err: Vec<f64> = hats.iter().map(|h| (h - rho).abs()).collect();
            rows.push(SweepRow {
                rho,
                method,
                rel_error_pct: 100.0 * (mean - rho).abs() / rho.abs(),
                se_pct: 100.0 * se / rho.abs(),
                mean_abs_rel_error_pct: 100.0 * mean_and_se(&abs_err).0 / rho.abs(),
                mean_rho_hat: mean,
                clamped: stats.iter().map(|s| s.clamped).sum(),
                domain_violations: stats.iter().map(|s| s.domain_violations).sum(),
                unreliable: stats.iter().map(|s| s.unreliable).sum(),
                runs: cfg.n_runs,
            });
        }
    }
    Ok(SweepResult { rows, notes })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoverySummary {
    pub method: MethodName,
    pub median_cosine: f64,
    pub mean_cosine: f64,
    pub min_cosine: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PcRecoveryResult {
    /// `(run, method, |cos|)` in run order.
    pub per_run: Vec<(usize, MethodName, f64)>,
    pub summary: Vec<RecoverySummary>,
    pub notes: Vec<String>,
}

impl PcRecoveryResult {
    pub fn summary_for(&self, method: MethodName) -> Option<&RecoverySummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from("run,method,abs_cosine\n");
        for (r, m, c) in &self.per_run {
            let _ = writeln!(s, "{r},{m},{c}");
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("method,median_abs_cosine,mean_abs_cosine,min_abs_cosine\n");
        for r in &self.summary {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.method, r.median_cosine, r.mean_cosine, r.min_cosine
            );
        }
        s
    }
}

/// Agreement of the estimated first principal direction with the true one.
///
/// Heavy-tailed methods centre at the per-coordinate Cauchy location;
/// `empirical` is classical PCA with mean centring.
pub fn run_pc_recovery(
    cfg: &ExperimentConfig,
    resources: &MethodResources,
) -> Result<PcRecoveryResult> {
    check_kind(cfg, ExperimentKind::PcRecovery)?;
    let SigmaSource::Fixed(sigma) = &cfg.sigma else {
        return Err(Error::Config("PC recovery needs a fixed covariance".into()));
    };
    let (methods, notes) = usable_methods(&cfg.methods, sigma.nrows());
    let estimators: Vec<ShapeMethod<f64>> = methods
        .iter()
        .map(|&m| resources.method(m))
        .collect::<Result<_>>()?;
    let spec = GaussianSpec::new(sigma.clone())?;
    let truth = sym_eigen(sigma)?;
    let root = RngSeed::new(cfg.seed);

    let cosines: Vec<Vec<f64>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|r| {
            let x = sample_superstatistical(&spec, cfg.subordinator, cfg.n, root.substream(r as u64))?;
            methods
                .iter()
                .zip(&estimators)
                .map(|(&name, est)| {
                    let model = if name.is_heavy_tailed() {
                        fit_heavy_pca(&x, est, 1, cfg.mode)?.model
                    } else {
                        fit_classical_pca(&x, 1)?
                    };
                    pc1_agreement(&model.component(0), &truth)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut per_run = Vec::new();
    for (r, row) in cosines.iter().enumerate() {
        for (&m, &c) in methods.iter().zip(row) {
            per_run.push((r, m, c));
        }
    }
    let summary = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let v: Vec<f64> = cosines.iter().map(|row| row[k]).collect();
            RecoverySummary {
                method,
                median_cosine: median(&v),
                mean_cosine: mean_and_se(&v).0,
                min_cosine: v.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    Ok(PcRecoveryResult {
        per_run,
        summary,
        notes,
    })
}

#[derive(Clone, Debug)]
pub struct BiasRmseEntry {
    pub method: MethodName,
    pub bias: Matrix<f64>,
    pub rmse: Matrix<f64>,
    /// Factor the raw estimate was divided by before comparing with Σ.
    pub scale_divisor: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BiasRmseResult {
    pub entries: Vec<BiasRmseEntry>,
    pub notes: Vec<String>,
}

impl BiasRmseResult {
    pub fn entry(&self, method: MethodName) -> Option<&BiasRmseEntry> {
        self.entries.iter().find(|e| e.method == method)
    }

    /// Long format: one line per method, statistic and matrix entry.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,statistic,i,j,value\n");
        for e in &self.entries {
            for (name, m) in [("bias", &e.bias), ("rmse", &e.rmse)] {
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        let _ = writeln!(s, "{},{name},{i},{j},{}", e.method, m[(i, j)]);
                    }
                }
            }
        }
        s
    }
}

/// Divisor that brings a raw estimate onto the scale of Σ, or `None` when
/// the method only determines the shape (then the trace is matched to Σ).
///
/// The ratio and log-correlation estimates carry `k²` with `k` the marginal
/// scale of a unit-variance coordinate; the uncentred empirical covariance
/// carries `E[A]`, which is 1 for the Gaussian control.
fn scale_divisor(
    method: MethodName,
    sub: Subordinator,
    mode: EstimatorMode,
    seed: RngSeed,
) -> Result<Option<f64>> {
    Ok(match method {
        MethodName::M1a | MethodName::M1b | MethodName::M1c | MethodName::M2 => {
            let k = scale_calibration(sub, mode, CALIBRATION_DRAWS, seed)?;
            Some(k * k)
        }
        MethodName::Empirical => match sub {
            Subordinator::Degenerate { a } => Some(a),
            Subordinator::Student { nu } if nu > 2.0 => Some(nu / (nu - 2.0)),
            _ => None,
        },
        MethodName::M3 | MethodName::Tyler => None,
    })
}

/// Entrywise bias and RMSE of `Σ̂ - Σ` over replicates.
pub fn run_bias_rmse(cfg: &ExperimentConfig, resources: &MethodResources) -> Result<BiasRmseResult> {
    check_kind(cfg, ExperimentKind::BiasRmse)?;
    let SigmaSource::Fixed(sigma) = &cfg.sigma else {
        return Err(Error::Config("bias/RMSE needs a fixed covariance".into()));
    };
    let d = sigma.nrows();
    let (methods, mut notes) = usable_methods(&cfg.methods, d);
    let estimators: Vec<ShapeMethod<f64>> = methods
        .iter()
        .map(|&m| resources.method(m))
        .collect::<Result<_>>()?;
    let root = RngSeed::new(cfg.seed);
    let divisors: Vec<Option<f64>> = methods
        .iter()
        .map(|&m| scale_divisor(m, cfg.subordinator, cfg.mode, root.substream(u64::MAX)))
        .collect::<Result<_>>()?;
    for (m, div) in methods.iter().zip(&divisors) {
        if div.is_none() {
            notes.push(format!("{m}: estimate determines shape only, trace matched to sigma"));
        }
    }
    let spec = GaussianSpec::new(sigma.clone())?;
    let target_trace = sigma.trace();

    let estimates: Vec<Vec<Matrix<f64>>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|r| {
            let x = sample_superstatistical(&spec, cfg.subordinator, cfg.n, root.substream(r as u64))?;
            estimators
                .iter()
                .zip(&divisors)
                .map(|(est, div)| {
                    let raw = est.estimate(&x, cfg.mode)?.shape.into_matrix();
                    let c = match div {
                        Some(v) => 1.0 / v,
                        None => target_trace / raw.trace(),
                    };
                    Ok(raw.scaled(c))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let runs = cfg.n_runs as f64;
    let entries = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mut bias = Matrix::zeros(d, d);
            let mut sq = Matrix::zeros(d, d);
            for run in &estimates {
                let diff = run[k].sub(sigma);
                bias = bias.add(&diff);
                sq = sq.add(&diff.map(|v| v * v));
            }
            BiasRmseEntry {
                method,
                bias: bias.scaled(1.0 / runs),
                rmse: sq.scaled(1.0 / runs).map(f64::sqrt),
                scale_divisor: divisors[k].unwrap_or(f64::NAN),
            }
        })
        .collect();
    Ok(BiasRmseResult { entries, notes })
}
