//! Gaussianization by the law of large numbers.
//!
//! Given `A_j`, `‖x_j‖² = A_j Σ_i σ_i² g_ij²` concentrates around `A_j t`
//! with `t = tr Σ`. Dividing each column by `sqrt(‖x_j‖²/t̂)` removes the
//! subordinator, and the ordinary second moment of the result estimates Σ.

use rayon::prelude::*;

use super::{Diagnostics, Estimate, ShapeMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::robust::{marginal_scales, EstimatorMode};
use crate::scalar::Real;

/// Below this dimension the estimator refuses to run.
pub const METHOD3_MIN_DIM: usize = 4;
/// Below this dimension the estimate comes with a warning.
pub const METHOD3_WARN_DIM: usize = 50;

#[derive(Clone, Debug)]
pub struct Method3Estimate<T> {
    pub estimate: Estimate<T>,
    /// Recovered subordinator value of every column, up to a common factor.
    pub a_hat: Vec<T>,
}

pub fn estimate_shape_method3<T: Real>(
    x: &Matrix<T>,
    mode: EstimatorMode,
) -> Result<Method3Estimate<T>> {
    let (d, n) = x.shape();
    if d < METHOD3_MIN_DIM {
        return Err(Error::DimensionTooSmall {
            got: d,
            min: METHOD3_MIN_DIM,
        });
    }
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let scales = marginal_scales(x, mode)?;
    let t_hat: T = scales.iter().map(|&s| s * s).sum();

    let mut sq = vec![T::zero(); n];
    for row in x.rows_iter() {
        for (acc, &v) in sq.iter_mut().zip(row) {
            *acc = *acc + v * v;
        }
    }
    if let Some(j) = sq.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::ZeroColumn(j));
    }
    let a_hat: Vec<T> = sq.iter().map(|&v| v / t_hat).collect();
    let inv_root: Vec<T> = a_hat.iter().map(|&a| T::one() / a.sqrt()).collect();

    let mut y = x.clone();
    for i in 0..d {
        for (v, &w) in y.row_mut(i).iter_mut().zip(&inv_root) {
            *v = *v * w;
        }
    }
    let cov = gram_scaled(&y, T::one() / T::of_usize(n));
    let shape = ShapeMatrix::psd_projected(cov)?;

    let mut diagnostics = Diagnostics::default();
    if d < METHOD3_WARN_DIM {
        diagnostics.warnings.push(format!(
            "Gaussianization with d = {d} < {METHOD3_WARN_DIM}: the concentration of the column norms is weak"
        ));
    }
    Ok(Method3Estimate {
        estimate: Estimate { shape, diagnostics },
        a_hat,
    })
}

/// `c · y yᵀ`, rows of the product computed in parallel.
fn gram_scaled<T: Real>(y: &Matrix<T>, c: T) -> Matrix<T> {
    let d = y.nrows();
    let rows: Vec<Vec<T>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let ri = y.row(i);
            (0..d)
                .map(|k| {
                    if k < i {
                        T::zero()
                    } else {
                        ri.iter().zip(y.row(k)).map(|(&a, &b)| a * b).sum::<T>() * c
                    }
                })
                .collect()
        })
        .collect();
    Matrix::from_fn(d, d, |i, k| if k >= i { rows[i][k] } else { rows[k][i] })
}
