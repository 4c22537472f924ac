//! Thin wrappers over faer's dense Hermitian eigensolver and SVD.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Mat<C64>;

/// Block length of [`ordered_sum`].
const SUM_BLOCK: usize = 1 << 14;

/// Sum of `f(i)` over `i < len`, split into fixed blocks summed in index
/// order, so the result does not depend on the number of threads.
pub fn ordered_sum<T, F>(len: usize, f: F) -> T
where
    T: Send + std::iter::Sum<T>,
    F: Fn(usize) -> T + Sync,
{
    use rayon::prelude::*;
    let parts: Vec<T> = (0..len.div_ceil(SUM_BLOCK))
        .into_par_iter()
        .map(|b| (b * SUM_BLOCK..((b + 1) * SUM_BLOCK).min(len)).map(&f).sum())
        .collect();
    parts.into_iter().sum()
}

/// Largest matrix dimension handled by the dense routines.
pub const DENSE_LIMIT: usize = 4096;

pub fn guard(dim: usize) -> Result<()> {
    if dim > DENSE_LIMIT {
        return Err(Error::SizeGuard { dim, limit: DENSE_LIMIT });
    }
    Ok(())
}

fn square(a: MatRef<'_, C64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    guard(a.nrows())?;
    Ok(a.nrows())
}

pub fn identity(m: usize) -> CMat {
    Mat::from_fn(m, m, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

pub fn zeros(r: usize, c: usize) -> CMat {
    Mat::from_fn(r, c, |_, _| C64::new(0.0, 0.0))
}

pub fn trace(a: MatRef<'_, C64>) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// `(A + A*) / 2`
pub fn hermitian_part(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// `max |A_ij - conj(A_ji)|`
pub fn hermiticity_defect(a: MatRef<'_, C64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows() - 1) {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Eigenvalues (ascending) of the Hermitian part of `a`.
pub fn hermitian_eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    square(a)?;
    let h = hermitian_part(a);
    h.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigenvalues: {e:?}")))
}

/// Eigenpairs `(values ascending, unitary U)` of the Hermitian part of `a`.
pub fn hermitian_eigen(a: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    square(a)?;
    let h = hermitian_part(a);
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigendecomposition: {e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn singular_values(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    guard(a.nrows().max(a.ncols()))?;
    a.singular_values().map_err(|e| Error::LinearAlgebra(format!("SVD: {e:?}")))
}

/// `U diag(f(lambda)) U*` for a Hermitian matrix.
pub fn hermitian_function<F: Fn(f64) -> C64>(a: MatRef<'_, C64>, f: F) -> Result<CMat> {
    let (values, u) = hermitian_eigen(a)?;
    let m = values.len();
    let fu = Mat::from_fn(m, m, |i, j| u[(i, j)] * f(values[j]));
    Ok(&fu * u.adjoint())
}

/// Kronecker product `a (x) b`.
pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}
