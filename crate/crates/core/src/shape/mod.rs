//! Estimation of the latent Gaussian shape matrix from heavy-tailed data.
//!
//! All estimators return the shape up to one positive scalar, which leaves
//! the eigenvectors (the principal directions) unchanged.

mod calibration;
mod empirical;
mod lln;
mod logcorr;
mod ratio;
mod tyler;

pub use calibration::{scale_calibration, scale_calibration_analytic};
pub use empirical::{empirical_covariance, Centering};
pub use lln::{estimate_shape_method3, Method3Estimate, METHOD3_MIN_DIM, METHOD3_WARN_DIM};
pub use logcorr::{
    build_log_lut, estimate_shape_method2, subordinator_log_moments, LogLut,
    SubordinatorLogMoments, LOG_ABS_GAUSSIAN_MEAN, MIN_LOG_MOMENT_DRAWS, UNRELIABLE_RHO,
};
pub use ratio::{estimate_shape_method1, rho_from_ratio, RatioFormula, RhoEstimate};
pub use tyler::{tyler_scatter, TylerOptions};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Matrix, SymEigen};
use crate::robust::EstimatorMode;
use crate::scalar::Real;

const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric positive semi-definite `d × d` matrix.
///
/// When the matrix comes out of [`ShapeMatrix::psd_projected`] its
/// eigendecomposition is kept alongside, so the PCA layer does not have to
/// decompose it a second time.
#[derive(Clone, Debug)]
pub struct ShapeMatrix<T> {
    entries: Matrix<T>,
    spectrum: Option<Arc<SymEigen<T>>>,
}

impl<T: Real> ShapeMatrix<T> {
    /// Wraps a symmetric matrix (asymmetry above `1e-10` relative is an
    /// error); the input is re-symmetrized exactly.
    pub fn new(entries: Matrix<T>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Dimension(format!(
                "shape matrix must be square, got {:?}",
                entries.shape()
            )));
        }
        let asym = entries.asymmetry().to_f64_lossy();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self {
            entries: entries.symmetrized(),
            spectrum: None,
        })
    }

    /// Clips negative eigenvalues to zero and reassembles the matrix. An
    /// input that is already PSD is returned as is.
    pub fn psd_projected(entries: Matrix<T>) -> Result<Self> {
        let sym = Self::new(entries)?;
        let mut eig = sym_eigen(&sym.entries)?;
        if eig.values.iter().all(|&v| v >= T::zero()) {
            return Ok(Self {
                entries: sym.entries,
                spectrum: Some(Arc::new(eig)),
            });
        }
        for v in eig.values.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        let rebuilt = eig.reconstruct().symmetrized();
        Ok(Self {
            entries: rebuilt,
            spectrum: Some(Arc::new(eig)),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[(i, j)]
    }

    /// Eigendecomposition, reusing the cached one when available.
    pub fn eigen(&self) -> Result<Arc<SymEigen<T>>> {
        match &self.spectrum {
            Some(e) => Ok(Arc::clone(e)),
            None => Ok(Arc::new(sym_eigen(&self.entries)?)),
        }
    }

    /// Multiplies by a positive constant.
    pub fn rescaled(&self, c: T) -> Self {
        assert!(c > T::zero(), "shape rescaling needs a positive factor");
        Self {
            entries: self.entries.scaled(c),
            spectrum: self.spectrum.as_ref().map(|e| {
                Arc::new(SymEigen {
                    values: e.values.iter().map(|&v| v * c).collect(),
                    vectors: e.vectors.clone(),
                })
            }),
        }
    }

    /// Rescaled to trace `d`.
    pub fn trace_normalized(&self) -> Self {
        let tr = self.entries.trace();
        self.rescaled(T::of_usize(self.dim()) / tr)
    }

    /// Correlation `s_ij / sqrt(s_ii s_jj)`.
    pub fn correlation(&self, i: usize, j: usize) -> T {
        self.get(i, j) / (self.get(i, i) * self.get(j, j)).sqrt()
    }

    /// Checks the type invariants: symmetry, positive diagonal and, when
    /// `check_psd`, eigenvalues no lower than `-1e-10·λmax`.
    pub fn check_invariants(&self, check_psd: bool) -> Result<()> {
        let asym = self.entries.asymmetry().to_f64_lossy();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        if let Some(i) = self.entries.diagonal().iter().position(|&v| !(v > T::zero())) {
            return Err(Error::Input(format!("diagonal entry {i} is not positive")));
        }
        if check_psd {
            let eig = self.eigen()?;
            let max = eig.values.first().copied().unwrap_or(T::zero());
            let min = eig.values.last().copied().unwrap_or(T::zero());
            if min < -T::of(1e-10) * max.abs() {
                return Err(Error::NotPsd {
                    min_eigenvalue: min.to_f64_lossy(),
                    max_eigenvalue: max.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

/// Counters and flags gathered while estimating a shape matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Off-diagonal pairs estimated.
    pub pairs: usize,
    /// Correlation estimates clamped into `[-1, 1]`.
    pub clamped: usize,
    /// Formula-B inputs far outside the formula's domain.
    pub domain_violations: usize,
    /// Cauchy ML fits that fell back to the quantile estimate.
    pub ml_fallbacks: usize,
    /// Log-correlation pairs with `|ρ̂| < 0.3`, where the method is known
    /// to be unreliable.
    pub unreliable_pairs: usize,
    /// Tyler iterate needed a ridge to stay invertible.
    pub regularized: bool,
    /// Fixed-point iterations used (Tyler only).
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn clamp_fraction(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.clamped as f64 / self.pairs as f64
        }
    }

    pub fn merge(&mut self, other: &Diagnostics) {
        self.pairs += other.pairs;
        self.clamped += other.clamped;
        self.domain_violations += other.domain_violations;
        self.ml_fallbacks += other.ml_fallbacks;
        self.unreliable_pairs += other.unreliable_pairs;
        self.regularized |= other.regularized;
        self.iterations = self.iterations.max(other.iterations);
        self.warnings.extend(other.warnings.iter().cloned());
    }

    pub(crate) fn finish(mut self) -> Self {
        if self.clamp_fraction() > 0.05 {
            self.warnings.push(format!(
                "{} of {} correlation estimates were clamped to [-1, 1]",
                self.clamped, self.pairs
            ));
        }
        if self.unreliable_pairs > 0 {
            self.warnings.push(format!(
                "{} log-correlation estimates fall below |rho| = {UNRELIABLE_RHO}, where the method is unreliable",
                self.unreliable_pairs
            ));
        }
        self
    }
}

/// A shape estimate with its diagnostics.
#[derive(Clone, Debug)]
pub struct Estimate<T> {
    pub shape: ShapeMatrix<T>,
    pub diagnostics: Diagnostics,
}

/// Estimator selection used by the PCA layer and the harness.
#[derive(Clone, Debug)]
pub enum ShapeMethod<T> {
    /// Ratio of the marginals with the given correlation formula.
    Ratio(RatioFormula),
    /// Log-correlation with a lookup table and subordinator log-moments.
    LogCorrelation {
        lut: Arc<LogLut<T>>,
        moments: Option<SubordinatorLogMoments>,
    },
    /// Law-of-large-numbers Gaussianization.
    Gaussianize,
    Tyler(TylerOptions),
    Empirical(Centering),
}

impl<T: Real> ShapeMethod<T> {
    /// Short name used in CSV output and on the command line.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Ratio(RatioFormula::A) => "m1a",
            Self::Ratio(RatioFormula::B) => "m1b",
            Self::Ratio(RatioFormula::C) => "m1c",
            Self::LogCorrelation { .. } => "m2",
            Self::Gaussianize => "m3",
            Self::Tyler(_) => "tyler",
            Self::Empirical(_) => "empirical",
        }
    }

    /// Whether the method is one of the heavy-tailed estimators (as
    /// opposed to the classical empirical covariance).
    pub fn is_heavy_tailed(&self) -> bool {
        !matches!(self, Self::Empirical(_))
    }

    pub fn estimate(&self, x: &Matrix<T>, mode: EstimatorMode) -> Result<Estimate<T>> {
        match self {
            Self::Ratio(formula) => estimate_shape_method1(x, *formula, mode),
            Self::LogCorrelation { lut, moments } => {
                estimate_shape_method2(x, lut, moments.as_ref(), mode)
            }
            Self::Gaussianize => estimate_shape_method3(x, mode).map(|e| e.estimate),
            Self::Tyler(opts) => tyler_scatter(x, *opts),
            Self::Empirical(center) => Ok(Estimate {
                shape: empirical_covariance(x, *center)?,
                diagnostics: Diagnostics::default(),
            }),
        }
    }
}

impl<T> fmt::Display for ShapeMethod<T>
where
    T: Real,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}
