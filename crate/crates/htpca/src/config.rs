//! Experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use htpca_core::linalg::Matrix;
use htpca_core::robust::EstimatorMode;
use htpca_core::sampling::Subordinator;
use htpca_core::shape::{
    build_log_lut, Centering, LogLut, RatioFormula, ShapeMethod, SubordinatorLogMoments,
    TylerOptions,
};
use htpca_core::{Error, Result};

/// Lookup-table defaults used when none is supplied.
pub const DEFAULT_LUT_STEP: f64 = 1e-3;
pub const DEFAULT_LUT_ORDER: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodName {
    M1a,
    M1b,
    M1c,
    M2,
    M3,
    Tyler,
    Empirical,
}

impl MethodName {
    pub const ALL: [MethodName; 7] = [
        Self::M1a,
        Self::M1b,
        Self::M1c,
        Self::M2,
        Self::M3,
        Self::Tyler,
        Self::Empirical,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::M1a => "m1a",
            Self::M1b => "m1b",
            Self::M1c => "m1c",
            Self::M2 => "m2",
            Self::M3 => "m3",
            Self::Tyler => "tyler",
            Self::Empirical => "empirical",
        }
    }

    pub fn is_heavy_tailed(&self) -> bool {
        *self != Self::Empirical
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(s: &str) -> Result<Vec<MethodName>> {
    let methods = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(Error::Config("method list is empty".into()));
    }
    Ok(methods)
}

/// Parses `cauchy`, `gaussian`, `stable:<alpha>`, `student:<nu>` or
/// `degenerate:<a>`.
pub fn parse_subordinator(s: &str) -> Result<Subordinator> {
    let s = s.trim().to_ascii_lowercase();
    let (kind, arg) = match s.split_once(':') {
        Some((k, v)) => {
            let v = v
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad subordinator parameter in `{s}`")))?;
            (k.to_string(), Some(v))
        }
        None => (s.clone(), None),
    };
    let sub = match (kind.as_str(), arg) {
        ("cauchy", None) => Subordinator::cauchy(),
        ("gaussian", None) => Subordinator::gaussian(),
        ("stable", Some(alpha)) => Subordinator::Stable { alpha },
        ("student", Some(nu)) => Subordinator::Student { nu },
        ("degenerate", Some(a)) => Subordinator::Degenerate { a },
        _ => return Err(Error::Config(format!("unknown subordinator `{s}`"))),
    };
    sub.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(sub)
}

pub fn subordinator_label(sub: Subordinator) -> String {
    match sub {
        Subordinator::Stable { alpha } if alpha == 1.0 => "cauchy".into(),
        Subordinator::Stable { alpha } => format!("stable:{alpha}"),
        Subordinator::Student { nu } => format!("student:{nu}"),
        Subordinator::Degenerate { a } if a == 1.0 => "gaussian".into(),
        Subordinator::Degenerate { a } => format!("degenerate:{a}"),
    }
}

/// Shared inputs some estimators need.
#[derive(Clone, Debug, Default)]
pub struct MethodResources {
    pub lut: Option<Arc<LogLut<f64>>>,
    pub moments: Option<SubordinatorLogMoments>,
}

impl MethodResources {
    /// Fills in whatever `methods` need and was not supplied: the default
    /// lookup table and the closed-form log-moments of `sub`.
    pub fn prepare(mut self, methods: &[MethodName], sub: Subordinator) -> Result<Self> {
        if methods.contains(&MethodName::M2) {
            if self.lut.is_none() {
                self.lut = Some(Arc::new(build_log_lut(DEFAULT_LUT_STEP, DEFAULT_LUT_ORDER)?));
            }
            if self.moments.is_none() {
                self.moments = Some(SubordinatorLogMoments::analytic(sub)?);
            }
        }
        Ok(self)
    }

    /// The estimator behind `name`. The empirical covariance is taken
    /// without centring, matching `(1/n) X Xᵀ`.
    pub fn method(&self, name: MethodName) -> Result<ShapeMethod<f64>> {
        Ok(match name {
            MethodName::M1a => ShapeMethod::Ratio(RatioFormula::A),
            MethodName::M1b => ShapeMethod::Ratio(RatioFormula::B),
            MethodName::M1c => ShapeMethod::Ratio(RatioFormula::C),
            MethodName::M2 => ShapeMethod::LogCorrelation {
                lut: self
                    .lut
                    .clone()
                    .ok_or_else(|| Error::Config("m2 needs a lookup table".into()))?,
                moments: self.moments,
            },
            MethodName::M3 => ShapeMethod::Gaussianize,
            MethodName::Tyler => ShapeMethod::Tyler(TylerOptions::default()),
            MethodName::Empirical => ShapeMethod::Empirical(Centering::None),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    RhoSweep,
    PcRecovery,
    BiasRmse,
    Denoise,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RhoSweep => "rho-sweep",
            Self::PcRecovery => "pc-recovery",
            Self::BiasRmse => "bias-rmse",
            Self::Denoise => "denoise",
        }
    }
}

/// Where the latent covariance comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaSource {
    /// `[[16, 8ρ], [8ρ, 4]]` for every ρ of the grid.
    SweepFamily,
    Fixed(Matrix<f64>),
}

/// The two-dimensional sweep family `[[16, 8ρ], [8ρ, 4]]`.
pub fn sweep_sigma(rho: f64) -> Matrix<f64> {
    Matrix::from_rows(&[[16.0, 8.0 * rho], [8.0 * rho, 4.0]])
}

/// `R D R` with `R = [[1, 0.8], [0.8, 1]]`, `D = diag(1, 0.4)`.
pub fn pc_recovery_sigma() -> Matrix<f64> {
    let r = Matrix::from_rows(&[[1.0, 0.8], [0.8, 1.0]]);
    r.matmul(&Matrix::from_diagonal(&[1.0, 0.4])).matmul(&r)
}

pub fn bias_rmse_sigma() -> Matrix<f64> {
    Matrix::from_rows(&[[1.0, 0.9, 0.5], [0.9, 1.0, 0.2], [0.5, 0.2, 1.0]])
}

pub fn default_rho_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub subordinator: Subordinator,
    pub sigma: SigmaSource,
    pub rho_grid: Vec<f64>,
    pub n: usize,
    pub n_runs: usize,
    pub methods: Vec<MethodName>,
    pub mode: EstimatorMode,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Cauchy data, `n = 800`, 200 runs, ρ from 0.1 to 0.9.
    pub fn rho_sweep(subordinator: Subordinator) -> Self {
        Self {
            kind: ExperimentKind::RhoSweep,
            subordinator,
            sigma: SigmaSource::SweepFamily,
            rho_grid: default_rho_grid(),
            n: 800,
            n_runs: 200,
            methods: vec![
                MethodName::M1a,
                MethodName::M1b,
                MethodName::M1c,
                MethodName::M2,
                MethodName::Tyler,
                MethodName::Empirical,
            ],
            mode: EstimatorMode::default(),
            seed: 1,
            out: None,
        }
    }

    /// Stable `α = 0.7` data on `R D R`, `n = 800`, 100 runs.
    pub fn pc_recovery() -> Self {
        Self {
            kind: ExperimentKind::PcRecovery,
            subordinator: Subordinator::Stable { alpha: 0.7 },
            sigma: SigmaSource::Fixed(pc_recovery_sigma()),
            rho_grid: Vec::new(),
            n: 800,
            n_runs: 100,
            methods: vec![MethodName::M1c, MethodName::Empirical],
            mode: EstimatorMode::default(),
            seed: 1,
            out: None,
        }
    }

    /// Cauchy data on the 3 × 3 test matrix, `n = 1000`, 400 runs.
    pub fn bias_rmse() -> Self {
        Self {
            kind: ExperimentKind::BiasRmse,
            subordinator: Subordinator::cauchy(),
            sigma: SigmaSource::Fixed(bias_rmse_sigma()),
            rho_grid: Vec::new(),
            n: 1000,
            n_runs: 400,
            methods: vec![MethodName::M1c],
            mode: EstimatorMode::default(),
            seed: 1,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::Config(format!("n must be at least 8, got {}", self.n)));
        }
        if self.n_runs == 0 {
            return Err(Error::Config("at least one run is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        self.subordinator
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        match &self.sigma {
            SigmaSource::SweepFamily => {
                if self.rho_grid.is_empty() {
                    return Err(Error::Config("rho grid is empty".into()));
                }
                if let Some(r) = self.rho_grid.iter().find(|r| !(r.abs() < 1.0) || **r == 0.0) {
                    return Err(Error::Config(format!(
                        "rho grid values must lie in (-1, 1) without 0, got {r}"
                    )));
                }
            }
            SigmaSource::Fixed(s) => {
                if !s.is_square() || s.nrows() < 2 {
                    return Err(Error::Config(format!("sigma must be square with d >= 2, got {:?}", s.shape())));
                }
            }
        }
        Ok(())
    }

    /// Plain-text rendering recorded in the run manifest.
    pub fn describe(&self) -> Vec<(String, String)> {
        let methods: Vec<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        let mut out = vec![
            ("experiment".into(), self.kind.as_str().into()),
            ("subordinator".into(), subordinator_label(self.subordinator)),
            ("n".into(), self.n.to_string()),
            ("runs".into(), self.n_runs.to_string()),
            ("methods".into(), methods.join(",")),
            ("mode".into(), self.mode.to_string()),
            ("seed".into(), self.seed.to_string()),
        ];
        match &self.sigma {
            SigmaSource::SweepFamily => {
                out.push(("sigma".into(), "[[16, 8 rho], [8 rho, 4]]".into()));
                let grid: Vec<String> = self.rho_grid.iter().map(|r| r.to_string()).collect();
                out.push(("rho_grid".into(), grid.join(",")));
            }
            SigmaSource::Fixed(s) => {
                let rows: Vec<String> = s
                    .rows_iter()
                    .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
                    .collect();
                out.push(("sigma".into(), rows.join("; ")));
            }
        }
        out
    }
}
