use std::fmt;
use std::str::FromStr;

use super::ShapeMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::robust::median;
use crate::scalar::Real;

/// Row centring applied before the empirical covariance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Centering {
    #[default]
    None,
    Median,
    Mean,
}

impl FromStr for Centering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "median" => Ok(Self::Median),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Config(format!("unknown centering `{other}`"))),
        }
    }
}

impl fmt::Display for Centering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Median => "median",
            Self::Mean => "mean",
        })
    }
}

pub(crate) fn center_rows<T: Real>(x: &Matrix<T>, center: Centering) -> Matrix<T> {
    let mut xc = x.clone();
    if center == Centering::None {
        return xc;
    }
    for i in 0..x.nrows() {
        let row = xc.row_mut(i);
        let c = match center {
            Centering::Mean => row.iter().copied().sum::<T>() / T::of_usize(row.len()),
            Centering::Median => median(row),
            Centering::None => T::zero(),
        };
        row.iter_mut().for_each(|v| *v = *v - c);
    }
    xc
}

/// `(1/n) x_c x_cᵀ` after the chosen centring.
pub fn empirical_covariance<T: Real>(x: &Matrix<T>, center: Centering) -> Result<ShapeMatrix<T>> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let xc = center_rows(x, center);
    ShapeMatrix::new(xc.gram_rows().scaled(T::one() / T::of_usize(n)))
}
