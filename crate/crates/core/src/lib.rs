//! Principal component analysis for heavy-tailed superstatistical data
//! `X = A^{1/2} G`, with `G` a centred Gaussian vector and `A` a positive
//! scalar drawn independently per sample.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod error;
pub mod linalg;
pub mod pca;
pub mod robust;
pub mod sampling;
pub mod scalar;
pub mod shape;
mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type ShapeMatrix64 = shape::ShapeMatrix<f64>;
pub type LogLut64 = shape::LogLut<f64>;
pub type ShapeMethod64 = shape::ShapeMethod<f64>;
pub type PcaModel64 = pca::PcaModel<f64>;
