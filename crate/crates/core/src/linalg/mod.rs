//! Dense linear algebra used by the estimators and the PCA layer.

mod cholesky;
mod eigen;
mod matrix;

pub use cholesky::cholesky;
pub use eigen::{jacobi_eigen, sym_eigen, tridiagonal_ql_eigen, SymEigen, JACOBI_MAX_DIM};
pub(crate) use eigen::fix_sign;
pub use matrix::{dot, norm, Matrix};
