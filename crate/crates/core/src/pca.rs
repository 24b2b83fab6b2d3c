//! Principal components from an estimated shape matrix, projection and the
//! logarithmic reconstruction cost `E[ln(1 + ‖x - W Mᵀ x‖²)]`.

use crate::error::{Error, Result};
use crate::linalg::{dot, fix_sign, norm, sym_eigen, Matrix, SymEigen};
use crate::robust::{location_vector, EstimatorMode};
use crate::scalar::Real;
use crate::shape::{Diagnostics, ShapeMethod};

pub use crate::linalg::sym_eigen as shape_eigen;

const ORTHONORMAL_TOL: f64 = 1e-8;
const TIE_TOL: f64 = 1e-8;

/// `m` leading principal directions with the centring used to find them.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel<T> {
    /// `d × m`, orthonormal columns.
    pub components: Matrix<T>,
    /// Descending, non-negative.
    pub eigenvalues: Vec<T>,
    pub location: Vec<T>,
}

impl<T: Real> PcaModel<T> {
    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn rank(&self) -> usize {
        self.components.ncols()
    }

    pub fn component(&self, k: usize) -> Vec<T> {
        self.components.column(k)
    }

    pub fn check_invariants(&self) -> Result<()> {
        check_orthonormal(&self.components)?;
        if self.eigenvalues.len() != self.rank() || self.location.len() != self.dim() {
            return Err(Error::Dimension("inconsistent PCA model".into()));
        }
        if self.eigenvalues.iter().any(|&v| v < T::zero())
            || self.eigenvalues.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::Input("eigenvalues must be non-negative and descending".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PcaFit<T> {
    pub model: PcaModel<T>,
    pub diagnostics: Diagnostics,
}

fn check_rank(m: usize, d: usize) -> Result<()> {
    if m == 0 || m > d {
        return Err(Error::Config(format!("number of components must be in 1..={d}, got {m}")));
    }
    Ok(())
}

fn centered<T: Real>(x: &Matrix<T>, location: &[T]) -> Matrix<T> {
    let mut xc = x.clone();
    for (i, &c) in location.iter().enumerate() {
        xc.row_mut(i).iter_mut().for_each(|v| *v = *v - c);
    }
    xc
}

fn truncate<T: Real>(eig: &SymEigen<T>, m: usize, location: Vec<T>) -> PcaModel<T> {
    PcaModel {
        components: eig.leading_vectors(m),
        eigenvalues: eig.values[..m].iter().map(|&v| v.max(T::zero())).collect(),
        location,
    }
}

/// Centres every row at its Cauchy location, estimates the shape matrix
/// with `method` and keeps the `m` leading eigenpairs.
pub fn fit_heavy_pca<T: Real>(
    x: &Matrix<T>,
    method: &ShapeMethod<T>,
    m: usize,
    mode: EstimatorMode,
) -> Result<PcaFit<T>> {
    check_rank(m, x.nrows())?;
    let location = location_vector(x, mode)?;
    let est = method.estimate(&centered(x, &location), mode)?;
    let eig = est.shape.eigen()?;
    Ok(PcaFit {
        model: truncate(&eig, m, location),
        diagnostics: est.diagnostics,
    })
}

/// Classical PCA: mean centring and the eigenvectors of `(1/n) x_c x_cᵀ`.
///
/// When `n < d` the eigenproblem is solved on the `n × n` Gram matrix
/// `x_cᵀ x_c / n` and mapped back, which gives the same leading pairs.
pub fn fit_classical_pca<T: Real>(x: &Matrix<T>, m: usize) -> Result<PcaModel<T>> {
    let (d, n) = x.shape();
    check_rank(m, d)?;
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let inv_n = T::one() / T::of_usize(n);
    let location: Vec<T> = x.rows_iter().map(|r| r.iter().copied().sum::<T>() * inv_n).collect();
    let xc = centered(x, &location);
    if n < d && m < n {
        let gram = xc.tr_matmul(&xc).scaled(inv_n);
        let eig = sym_eigen(&gram)?;
        let floor = T::of(1e-10) * eig.values[0].abs();
        if eig.values[..m].iter().all(|&v| v > floor) {
            let mut components = Matrix::zeros(d, m);
            for k in 0..m {
                let mut u = xc.mul_vec(&eig.vector(k));
                let len = norm(&u);
                u.iter_mut().for_each(|v| *v = *v / len);
                fix_sign(&mut u);
                components.set_column(k, &u);
            }
            return Ok(PcaModel {
                components,
                eigenvalues: eig.values[..m].to_vec(),
                location,
            });
        }
    }
    let cov = xc.gram_rows().scaled(inv_n).symmetrized();
    Ok(truncate(&sym_eigen(&cov)?, m, location))
}

/// `location + W Wᵀ (x_j - location)` for every column.
pub fn project_reconstruct<T: Real>(x: &Matrix<T>, model: &PcaModel<T>) -> Result<Matrix<T>> {
    if x.nrows() != model.dim() {
        return Err(Error::Dimension(format!(
            "data has {} rows, model has dimension {}",
            x.nrows(),
            model.dim()
        )));
    }
    let w = &model.components;
    let xc = centered(x, &model.location);
    let mut out = w.matmul(&w.tr_matmul(&xc));
    for (i, &c) in model.location.iter().enumerate() {
        out.row_mut(i).iter_mut().for_each(|v| *v = *v + c);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogCostReport {
    /// Sample mean of `ln(1 + ‖x_j - W Mᵀ x_j‖²)`.
    pub value: f64,
    pub n_used: usize,
}

fn check_orthonormal<T: Real>(w: &Matrix<T>) -> Result<()> {
    let g = w.tr_matmul(w);
    let dev = g.sub(&Matrix::identity(w.ncols())).max_abs().to_f64_lossy();
    if dev > ORTHONORMAL_TOL {
        return Err(Error::Input(format!("WᵀW deviates from the identity by {dev:e}")));
    }
    Ok(())
}

/// Squared per-sample residuals `‖x_j - W Mᵀ x_j‖²`.
/// `W` must have orthonormal columns; `map` is any `d × m` matrix.
pub fn residual_sq_norms<T: Real>(x: &Matrix<T>, w: &Matrix<T>, map: &Matrix<T>) -> Result<Vec<f64>> {
    if w.shape() != map.shape() || w.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "log cost needs W and M of shape {}×m, got {:?} and {:?}",
            x.nrows(),
            w.shape(),
            map.shape()
        )));
    }
    check_orthonormal(w)?;
    let resid = x.sub(&w.matmul(&map.tr_matmul(x)));
    let mut sq = vec![0.0f64; x.ncols()];
    for row in resid.rows_iter() {
        for (s, &v) in sq.iter_mut().zip(row) {
            let v = v.to_f64_lossy();
            *s += v * v;
        }
    }
    Ok(sq)
}

/// Logarithmic reconstruction cost of the encoder `Mᵀ` and decoder `W`.
pub fn log_cost<T: Real>(x: &Matrix<T>, w: &Matrix<T>, map: &Matrix<T>) -> Result<LogCostReport> {
    let sq = residual_sq_norms(x, w, map)?;
    let n = sq.len();
    if n == 0 {
        return Ok(LogCostReport { value: 0.0, n_used: 0 });
    }
    let value = sq.iter().map(|s| s.ln_1p()).sum::<f64>() / n as f64;
    Ok(LogCostReport { value, n_used: n })
}

/// `u·v / (‖u‖ ‖v‖)`.
pub fn cosine_similarity<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if !(nu > T::zero() && nv > T::zero()) {
        return Err(Error::Input("cosine similarity of a zero vector".into()));
    }
    Ok((dot(u, v) / (nu * nv)).max(-T::one()).min(T::one()))
}

/// Cosines of the principal angles between the column spans of `u` and
/// `v` (both with orthonormal columns), largest first.
pub fn principal_cosines<T: Real>(u: &Matrix<T>, v: &Matrix<T>) -> Result<Vec<T>> {
    if u.nrows() != v.nrows() {
        return Err(Error::Dimension("subspaces live in different dimensions".into()));
    }
    let c = u.tr_matmul(v);
    let eig = sym_eigen(&c.tr_matmul(&c).symmetrized())?;
    Ok(eig
        .values
        .iter()
        .take(u.ncols().min(v.ncols()))
        .map(|&s| s.max(T::zero()).sqrt().min(T::one()))
        .collect())
}

/// Agreement of an estimated first direction with the truth, as `|cos|`.
///
/// When the leading true eigenvalue is tied (within `1e-8` relative) the
/// first direction is not identifiable and the cosine to the whole tied
/// eigenspace is reported instead.
pub fn pc1_agreement<T: Real>(estimated: &[T], truth: &SymEigen<T>) -> Result<T> {
    let top = truth.values[0];
    let tied = truth
        .values
        .iter()
        .take_while(|&&v| (top - v).abs() <= T::of(TIE_TOL) * top.abs())
        .count();
    if tied <= 1 {
        return cosine_similarity(estimated, &truth.vector(0)).map(|c| c.abs());
    }
    let u = Matrix::from_columns(&[estimated.to_vec()]);
    let len = norm(estimated);
    if !(len > T::zero()) {
        return Err(Error::Input("cosine similarity of a zero vector".into()));
    }
    let cos = principal_cosines(&u.scaled(T::one() / len), &truth.leading_vectors(tied))?;
    Ok(cos[0])
}
