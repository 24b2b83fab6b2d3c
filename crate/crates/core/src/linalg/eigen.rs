//! Symmetric eigendecomposition.
//!
//! Two independent solvers live here: cyclic Jacobi rotations, used for
//! small and moderate matrices, and Householder tridiagonalization
//! followed by implicit QL, used above [`JACOBI_MAX_DIM`] where Jacobi's
//! repeated full sweeps get expensive. Both produce the same normalized
//! output (see [`SymEigen`]).

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Largest dimension handled by cyclic Jacobi in [`sym_eigen`].
pub const JACOBI_MAX_DIM: usize = 96;

const SYMMETRY_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;
const QL_MAX_ITER: usize = 60;

/// Eigenpairs of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order; `vectors` holds the matching
/// unit eigenvectors as columns. Each eigenvector is signed so that its
/// largest-magnitude entry is positive, and eigenvalues tied within `1e-8`
/// of the spectral radius are ordered lexicographically (descending) by
/// their sign-fixed eigenvectors, so inside such a tie group the values are
/// only descending up to that tolerance.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Real> SymEigen<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<T> {
        self.vectors.column(k)
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            if lambda == T::zero() {
                continue;
            }
            let u = self.vector(k);
            for i in 0..n {
                let ui = u[i] * lambda;
                if ui == T::zero() {
                    continue;
                }
                let row = out.row_mut(i);
                for (o, &uj) in row.iter_mut().zip(&u) {
                    *o = *o + ui * uj;
                }
            }
        }
        out
    }

    /// Leading `m` eigenvectors as a `d × m` matrix.
    pub fn leading_vectors(&self, m: usize) -> Matrix<T> {
        let d = self.vectors.nrows();
        Matrix::from_fn(d, m, |i, j| self.vectors[(i, j)])
    }

    fn from_unsorted(values: Vec<T>, vectors_as_rows: Vec<Vec<T>>) -> Self {
        let n = values.len();
        let mut pairs: Vec<(T, Vec<T>)> = values
            .into_iter()
            .zip(vectors_as_rows)
            .map(|(l, mut v)| {
                fix_sign(&mut v);
                (l, v)
            })
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));

        let radius = pairs
            .iter()
            .fold(T::zero(), |m, (l, _)| m.max(l.abs()));
        let tie = T::of(1e-8) * radius;
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && (pairs[end - 1].0 - pairs[end].0).abs() <= tie {
                end += 1;
            }
            if end - start > 1 {
                pairs[start..end].sort_by(|a, b| lex_cmp(&b.1, &a.1));
            }
            start = end;
        }

        let mut vectors = Matrix::zeros(n, n);
        let mut vals = Vec::with_capacity(n);
        for (j, (l, v)) in pairs.into_iter().enumerate() {
            vals.push(l);
            vectors.set_column(j, &v);
        }
        Self {
            values: vals,
            vectors,
        }
    }
}

/// Flips `v` so that its largest-magnitude entry (the first one on ties)
/// is positive.
pub(crate) fn fix_sign<T: Real>(v: &mut [T]) {
    let mut best = T::zero();
    let mut sign = T::one();
    for &x in v.iter() {
        // strict comparison keeps the first of equal-magnitude entries
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn lex_cmp<T: Real>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

fn check_symmetric<T: Real>(s: &Matrix<T>) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {:?}",
            s.shape()
        )));
    }
    if !s.all_finite() {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    let asym = s.asymmetry().to_f64_lossy();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix, choosing the solver by size.
pub fn sym_eigen<T: Real>(s: &Matrix<T>) -> Result<SymEigen<T>> {
    if s.nrows() <= JACOBI_MAX_DIM {
        jacobi_eigen(s)
    } else {
        tridiagonal_ql_eigen(s)
    }
}

/// Cyclic Jacobi rotations, sweeping until the off-diagonal Frobenius mass
/// drops below `1e-12 ‖s‖_F`.
pub fn jacobi_eigen<T: Real>(s: &Matrix<T>) -> Result<SymEigen<T>> {
    check_symmetric(s)?;
    let n = s.nrows();
    let mut a = s.symmetrized();
    let mut v = Matrix::<T>::identity(n);
    let target = T::of(1e-12) * s.frobenius_norm();
    // Rotating away entries far below the target only burns time.
    let skip = T::of(1e-18) * s.frobenius_norm();

    let mut sweep = 0;
    loop {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + a[(p, q)] * a[(p, q)];
            }
        }
        let off = (off + off).sqrt();
        if off <= target || n < 2 {
            break;
        }
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(Error::NonConvergence {
                iterations: sweep,
                change: off.to_f64_lossy(),
                last: None,
            });
        }
        sweep += 1;

        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= skip {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (apq + apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_p = c * akp - sn * akq;
                    let new_q = sn * akp + c * akq;
                    a[(k, p)] = new_p;
                    a[(p, k)] = new_p;
                    a[(k, q)] = new_q;
                    a[(q, k)] = new_q;
                }
                a[(p, p)] = a[(p, p)] - t * apq;
                a[(q, q)] = a[(q, q)] + t * apq;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let values = a.diagonal();
    let vt = v.transpose();
    let rows = vt.rows_iter().map(<[T]>::to_vec).collect();
    Ok(SymEigen::from_unsorted(values, rows))
}

/// Householder reduction to tridiagonal form followed by the implicit QL
/// algorithm (EISPACK `tred2`/`tql2` lineage).
pub fn tridiagonal_ql_eigen<T: Real>(s: &Matrix<T>) -> Result<SymEigen<T>> {
    check_symmetric(s)?;
    let n = s.nrows();
    if n == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }
    let mut v = s.symmetrized();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    // Both passes work on the transposed eigenvector matrix so that the
    // inner loops run along contiguous rows.
    tred2(&mut v, &mut d, &mut e);
    let mut vt = v;
    tql2(&mut vt, &mut d, &mut e)?;
    let rows = vt.rows_iter().map(<[T]>::to_vec).collect();
    Ok(SymEigen::from_unsorted(d, rows))
}

/// Dot product with four independent accumulators so the loop can be
/// vectorized.
fn dot_unrolled<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let tail = ra.iter().zip(rb).fold(T::zero(), |s, (&x, &y)| s + x * y);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Operates on the transpose of the textbook layout: on return row `k` of
/// `v` is the `k`-th column of the orthogonal reduction matrix.
fn tred2<T: Real>(v: &mut Matrix<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    let zero = T::zero();
    for j in 0..n {
        d[j] = v[(j, n - 1)];
    }

    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for &dk in d.iter().take(i) {
            scale = scale + dk.abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(j, i - 1)];
                v[(j, i)] = zero;
                v[(i, j)] = zero;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk = *dk / scale;
                h = h + *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }

            for j in 0..i {
                let f = d[j];
                v[(i, j)] = f;
                let row = &v.row(j)[..i];
                let mut g = e[j] + row[j] * f;
                for ((&vkj, &dk), ek) in row[j + 1..].iter().zip(&d[j + 1..i]).zip(&mut e[j + 1..i]) {
                    g = g + vkj * dk;
                    *ek = *ek + vkj * f;
                }
                e[j] = g;
            }
            let mut f = zero;
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                let row = v.row_mut(j);
                for ((vk, &ek), &dk) in row[j..i].iter_mut().zip(&e[j..i]).zip(&d[j..i]) {
                    *vk = *vk - (f * ek + g * dk);
                }
                d[j] = row[i - 1];
                row[i] = zero;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[(i, n - 1)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != zero {
            let pivot: Vec<T> = v.row(i + 1)[..=i].to_vec();
            for (dk, &pk) in d.iter_mut().zip(&pivot) {
                *dk = pk / h;
            }
            for j in 0..=i {
                let row = &mut v.row_mut(j)[..=i];
                let g = dot_unrolled(row, &pivot);
                for (vk, &dk) in row.iter_mut().zip(&d[..=i]) {
                    *vk = *vk - g * dk;
                }
            }
        }
        for k in 0..=i {
            v[(i + 1, k)] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[(j, n - 1)];
        v[(j, n - 1)] = zero;
    }
    v[(n - 1, n - 1)] = T::one();
    e[0] = zero;
}

/// `vt` holds eigenvectors as rows.
fn tql2<T: Real>(vt: &mut Matrix<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    let zero = T::zero();
    let one = T::one();
    let two = T::of(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(Error::NonConvergence {
                        iterations: iter,
                        change: e[l].to_f64_lossy(),
                        last: None,
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    let cols = vt.ncols();
                    let (lo, hi) = vt.as_mut_slice().split_at_mut((i + 1) * cols);
                    let row_i = &mut lo[i * cols..];
                    let row_next = &mut hi[..cols];
                    for (vi, vn) in row_i.iter_mut().zip(row_next.iter_mut()) {
                        let hk = *vn;
                        *vn = s * *vi + c * hk;
                        *vi = c * *vi - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = zero;
    }
    Ok(())
}
