//! Reproducible samplers for the superstatistical model `X = A^{1/2} G`.
//!
//! Stable variates use the Chambers–Mallows–Stuck transform in the
//! 1-parameterization `S(α, β, γ, δ)`: for `α ≠ 1` a draw is
//! `γ·Z + δ`; for `α = 1` it is `γ·Z + (2/π)βγ·ln γ + δ`, where `Z` is the
//! standard `S(α, β, 1, 0)` variate.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::distr::Open01;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::scalar::Real;

/// Seed plus substream id. Equal values always reproduce equal draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub const fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub const fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Child seed for an indexed sub-task. Children of distinct parents or
    /// distinct indices are decorrelated through a splitmix64 mix.
    pub fn substream(&self, index: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x632b_e59b_d9b4_e019))),
            stream: index,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Parameters of `S(α, β, γ, δ)` in the 1-parameterization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            gamma,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::Domain(format!("alpha = {} not in (0, 2]", self.alpha)));
        }
        if !(-1.0..=1.0).contains(&self.beta) {
            return Err(Error::Domain(format!("beta = {} not in [-1, 1]", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma = {} must be positive", self.gamma)));
        }
        if !self.delta.is_finite() {
            return Err(Error::Domain("delta must be finite".into()));
        }
        Ok(())
    }

    /// One draw via Chambers–Mallows–Stuck.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = Open01.sample(rng);
        let v = PI * (u - 0.5);
        let w: f64 = Exp1.sample(rng);
        let (alpha, beta) = (self.alpha, self.beta);
        if alpha == 1.0 {
            let shifted = FRAC_PI_2 + beta * v;
            let z = (shifted * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / shifted).ln())
                / FRAC_PI_2;
            self.gamma * z + beta * self.gamma * self.gamma.ln() / FRAC_PI_2 + self.delta
        } else {
            let zeta = beta * (PI * alpha / 2.0).tan();
            let xi = zeta.atan() / alpha;
            let scale = (1.0 + zeta * zeta).powf(1.0 / (2.0 * alpha));
            let z = scale * (alpha * (v + xi)).sin() / v.cos().powf(1.0 / alpha)
                * ((v - alpha * (v + xi)).cos() / w).powf((1.0 - alpha) / alpha);
            self.gamma * z + self.delta
        }
    }
}

/// `n` i.i.d. draws from `S(α, β, γ, δ)`.
pub fn sample_standard_stable<T: Real>(
    params: StableParams,
    n: usize,
    seed: RngSeed,
) -> Result<Vec<T>> {
    params.validate()?;
    check_count(n)?;
    let mut rng = seed.rng();
    Ok((0..n).map(|_| T::of(params.draw(&mut rng))).collect())
}

/// Positive mixing variable `A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Subordinator {
    /// Totally skewed `S(α/2, 1, cos(απ/4)^{2/α}, 0)`; yields sub-Gaussian
    /// symmetric α-stable data.
    Stable { alpha: f64 },
    /// `ν / U` with `U ~ χ²(ν)`; yields multivariate Student-t data.
    Student { nu: f64 },
    /// The constant `a`; `a = 1` gives plain Gaussian data.
    Degenerate { a: f64 },
}

impl Subordinator {
    pub fn cauchy() -> Self {
        Self::Stable { alpha: 1.0 }
    }

    pub fn gaussian() -> Self {
        Self::Degenerate { a: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Stable { alpha } if !(alpha > 0.0 && alpha < 2.0) => Err(Error::Domain(
                format!("stable subordinator needs alpha in (0, 2), got {alpha}"),
            )),
            Self::Student { nu } if !(nu > 0.0 && nu.is_finite()) => Err(Error::Domain(
                format!("student subordinator needs nu > 0, got {nu}"),
            )),
            Self::Degenerate { a } if !(a > 0.0 && a.is_finite()) => Err(Error::Domain(
                format!("degenerate subordinator needs a > 0, got {a}"),
            )),
            _ => Ok(()),
        }
    }

    /// Stable law of `A` for the stable kind.
    pub fn stable_params(&self) -> Option<StableParams> {
        match *self {
            Self::Stable { alpha } => Some(StableParams {
                alpha: alpha / 2.0,
                beta: 1.0,
                gamma: (alpha * PI / 4.0).cos().powf(2.0 / alpha),
                delta: 0.0,
            }),
            _ => None,
        }
    }

    fn sampler(&self) -> Result<SubordinatorSampler> {
        self.validate()?;
        Ok(match *self {
            Self::Stable { .. } => SubordinatorSampler::Stable(self.stable_params().unwrap()),
            Self::Student { nu } => SubordinatorSampler::Student {
                nu,
                chi2: ChiSquared::new(nu).map_err(|e| Error::Domain(e.to_string()))?,
            },
            Self::Degenerate { a } => SubordinatorSampler::Constant(a),
        })
    }
}

enum SubordinatorSampler {
    Stable(StableParams),
    Student { nu: f64, chi2: ChiSquared<f64> },
    Constant(f64),
}

impl SubordinatorSampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let a = match self {
            Self::Stable(p) => p.draw(rng),
            Self::Student { nu, chi2 } => nu / chi2.sample(rng),
            Self::Constant(a) => *a,
        };
        if a > 0.0 && a.is_finite() {
            Ok(a)
        } else {
            Err(Error::Internal(format!("subordinator produced {a}")))
        }
    }
}

pub fn sample_subordinator(sub: Subordinator, n: usize, seed: RngSeed) -> Result<Vec<f64>> {
    check_count(n)?;
    let sampler = sub.sampler()?;
    let mut rng = seed.rng();
    (0..n).map(|_| sampler.draw(&mut rng)).collect()
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::Domain("sample count must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Covariance of the latent Gaussian together with its cached factor.
#[derive(Clone, Debug)]
pub struct GaussianSpec<T> {
    sigma: Matrix<T>,
    chol: Matrix<T>,
}

impl<T: Real> GaussianSpec<T> {
    pub fn new(sigma: Matrix<T>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Dimension(format!(
                "covariance must be square, got {:?}",
                sigma.shape()
            )));
        }
        let asym = sigma.asymmetry().to_f64_lossy();
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        let chol = cholesky(&sigma)?;
        Ok(Self { sigma, chol })
    }

    /// `variance · I` without a factorization.
    pub fn isotropic(dim: usize, variance: T) -> Result<Self> {
        if !(variance > T::zero()) || dim == 0 {
            return Err(Error::Domain(format!(
                "isotropic covariance needs dim > 0 and variance > 0, got {dim} and {variance}"
            )));
        }
        Ok(Self {
            sigma: Matrix::identity(dim).scaled(variance),
            chol: Matrix::identity(dim).scaled(variance.sqrt()),
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &Matrix<T> {
        &self.sigma
    }

    pub fn chol(&self) -> &Matrix<T> {
        &self.chol
    }
}

/// `d × n` matrix whose column `j` is `sqrt(A_j) · L · z_j`.
///
/// Every column draws from its own substream of `seed`, so the output does
/// not depend on how columns are scheduled.
pub fn sample_superstatistical<T: Real>(
    spec: &GaussianSpec<T>,
    sub: Subordinator,
    n: usize,
    seed: RngSeed,
) -> Result<Matrix<T>> {
    check_count(n)?;
    let sampler = sub.sampler()?;
    let d = spec.dim();
    let l = spec.chol().cast::<f64>();
    let mut out = Matrix::zeros(d, n);
    let mut z = vec![0.0f64; d];
    for j in 0..n {
        let mut rng = seed.substream(j as u64).rng();
        let a = sampler.draw(&mut rng)?;
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let root = a.sqrt();
        for i in 0..d {
            let row = &l.row(i)[..=i];
            let g: f64 = row.iter().zip(&z).map(|(lik, zk)| lik * zk).sum();
            out[(i, j)] = T::of(root * g);
        }
    }
    Ok(out)
}
