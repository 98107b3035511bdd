//! Thin wrappers over the dense solvers. faer is built without its rayon
//! backend, so every call here runs sequentially and is bit-reproducible.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, MatRef, Side};

use crate::{Error, Result};

/// Eigenvalues of a Hermitian matrix (lower triangle is read), ascending.
pub fn hermitian_eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::computation(format!("Hermitian eigensolver: {e:?}")))
}

/// Singular values, descending.
pub fn singular_values(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| Error::computation(format!("singular value decomposition: {e:?}")))
}

/// Full SVD `A = U diag(s) V*` with singular values descending.
pub struct SvdParts {
    pub u: Mat<c64>,
    pub s: Vec<f64>,
    pub v: Mat<c64>,
}

pub fn svd(a: MatRef<'_, c64>) -> Result<SvdParts> {
    let svd = a
        .svd()
        .map_err(|e| Error::computation(format!("singular value decomposition: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|x| x.re).collect();
    Ok(SvdParts {
        u: svd.U().to_owned(),
        s,
        v: svd.V().to_owned(),
    })
}

/// `A B*`.
pub fn mul_adjoint(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    a * b.adjoint()
}

/// Inverse through partially pivoted LU. Non-finite output is reported as a
/// computation error (numerically singular input).
pub fn inverse(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid("inverse of a non-square matrix"));
    }
    let inv = a.partial_piv_lu().inverse();
    if all_finite(inv.as_ref()) {
        Ok(inv)
    } else {
        Err(Error::computation("matrix is numerically singular"))
    }
}

/// Solves `A X = B`.
pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let x = a.partial_piv_lu().solve(b);
    if all_finite(x.as_ref()) {
        Ok(x)
    } else {
        Err(Error::computation("matrix is numerically singular"))
    }
}

pub fn all_finite(a: MatRef<'_, c64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            out = out.max(a[(i, j)].norm());
        }
    }
    out
}

#[cfg(test)]
pub fn frobenius(a: MatRef<'_, c64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}
