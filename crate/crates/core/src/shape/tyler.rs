//! Tyler's M-estimator of scatter.

use rayon::prelude::*;

use super::{Diagnostics, Estimate, ShapeMatrix};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::scalar::Real;

const CHUNK: usize = 256;
const RIDGE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TylerOptions {
    /// Relative Frobenius change that ends the iteration.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TylerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

/// Solves `L z = x` in place for lower-triangular `L`.
fn forward_solve<T: Real>(l: &Matrix<T>, x: &mut [T]) {
    for i in 0..x.len() {
        let row = l.row(i);
        let mut acc = x[i];
        for k in 0..i {
            acc = acc - row[k] * x[k];
        }
        x[i] = if row[i] > T::zero() { acc / row[i] } else { T::zero() };
    }
}

/// Cholesky factor with a strictly positive diagonal, adding a ridge of
/// `1e-12 · trace` when the iterate is numerically singular.
fn factor<T: Real>(sigma: &Matrix<T>, regularized: &mut bool) -> Result<Matrix<T>> {
    let d = sigma.nrows();
    let floor = T::of(1e-7) * sigma.trace().sqrt() / T::of_usize(d).sqrt();
    match cholesky(sigma) {
        Ok(l) if l.diagonal().iter().all(|&v| v > floor) => Ok(l),
        _ => {
            *regularized = true;
            let ridge = Matrix::identity(d).scaled(T::of(RIDGE) * sigma.trace());
            cholesky(&sigma.add(&ridge))
        }
    }
}

/// `(d/n) Σ_j x_j x_jᵀ / (x_jᵀ Σ⁻¹ x_j)` over the non-zero columns.
///
/// Columns are summed in fixed-size chunks and the chunk sums combined in
/// order, so the result does not depend on the thread count.
fn tyler_map<T: Real>(cols: &[Vec<T>], l: &Matrix<T>) -> Matrix<T> {
    let d = l.nrows();
    let partial: Vec<Vec<T>> = cols
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![T::zero(); d * d];
            let mut z = vec![T::zero(); d];
            for x in chunk {
                z.copy_from_slice(x);
                forward_solve(l, &mut z);
                let q: T = z.iter().map(|&v| v * v).sum();
                if !(q > T::zero()) {
                    continue;
                }
                let w = T::one() / q;
                for a in 0..d {
                    let xa = x[a] * w;
                    for b in a..d {
                        acc[a * d + b] = acc[a * d + b] + xa * x[b];
                    }
                }
            }
            acc
        })
        .collect();
    let mut sum = vec![T::zero(); d * d];
    for p in &partial {
        for (s, &v) in sum.iter_mut().zip(p) {
            *s = *s + v;
        }
    }
    let c = T::of_usize(d) / T::of_usize(cols.len());
    Matrix::from_fn(d, d, |a, b| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        sum[a * d + b] * c
    })
}

fn trace_to_dim<T: Real>(m: Matrix<T>) -> Matrix<T> {
    let c = T::of_usize(m.nrows()) / m.trace();
    m.scaled(c)
}

/// Fixed point of `Σ ← (d/n) Σ_j x_j x_jᵀ / (x_jᵀ Σ⁻¹ x_j)`, started at the
/// identity and renormalized to trace `d` after every step. All-zero
/// columns carry no direction and are skipped.
pub fn tyler_scatter<T: Real>(x: &Matrix<T>, opts: TylerOptions) -> Result<Estimate<T>> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Config(format!("invalid Tyler options {opts:?}")));
    }
    let (d, n) = x.shape();
    let cols: Vec<Vec<T>> = (0..n)
        .map(|j| x.column(j))
        .filter(|c| c.iter().any(|&v| v != T::zero()))
        .collect();
    if cols.len() <= d {
        return Err(Error::TooFewSamples {
            got: cols.len(),
            need: d + 1,
        });
    }

    let mut diagnostics = Diagnostics::default();
    let mut sigma = Matrix::<T>::identity(d);
    let mut change = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let l = factor(&sigma, &mut diagnostics.regularized)?;
        let next = trace_to_dim(tyler_map(&cols, &l));
        change = (next.sub(&sigma).frobenius_norm() / sigma.frobenius_norm()).to_f64_lossy();
        sigma = next;
        if !change.is_finite() {
            break;
        }
        if change < opts.tol {
            diagnostics.iterations = iter;
            if diagnostics.regularized {
                diagnostics
                    .warnings
                    .push("Tyler iterate was singular and had to be regularized".into());
            }
            return Ok(Estimate {
                shape: ShapeMatrix::psd_projected(sigma)?,
                diagnostics,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        change,
        last: Some(Box::new(sigma.cast::<f64>())),
    })
}
