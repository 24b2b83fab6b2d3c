use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Lower-triangular factor `L` with `L Lᵀ = sigma` for a symmetric positive
/// semi-definite `sigma`.
///
/// Pivots that vanish (up to `1e-10` of the largest diagonal entry) leave
/// a zero column in `L` instead of failing, so rank-deficient matrices
/// factor cleanly. A pivot that is clearly negative, or a vanishing pivot
/// whose column still carries mass, is reported as [`Error::NotPsd`].
pub fn cholesky<T: Real>(sigma: &Matrix<T>) -> Result<Matrix<T>> {
    if !sigma.is_square() {
        return Err(Error::Dimension(format!(
            "cholesky needs a square matrix, got {:?}",
            sigma.shape()
        )));
    }
    let n = sigma.nrows();
    let max_diag = sigma
        .diagonal()
        .into_iter()
        .fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = T::of(1e-10) * max_diag;
    let mut l = Matrix::zeros(n, n);

    for j in 0..n {
        let mut pivot = sigma[(j, j)];
        for k in 0..j {
            pivot = pivot - l[(j, k)] * l[(j, k)];
        }
        if pivot < -tol {
            return Err(Error::NotPsd {
                min_eigenvalue: pivot.to_f64_lossy(),
                max_eigenvalue: max_diag.to_f64_lossy(),
            });
        }
        if pivot <= tol {
            // Rank-deficient direction: the column must already be explained
            // by earlier columns.
            for i in (j + 1)..n {
                let mut r = sigma[(i, j)];
                for k in 0..j {
                    r = r - l[(i, k)] * l[(j, k)];
                }
                if r.abs() > tol.sqrt() * max_diag.sqrt() + tol {
                    return Err(Error::NotPsd {
                        min_eigenvalue: pivot.to_f64_lossy(),
                        max_eigenvalue: max_diag.to_f64_lossy(),
                    });
                }
            }
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut r = sigma[(i, j)];
            for k in 0..j {
                r = r - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / d;
        }
    }
    Ok(l)
}
