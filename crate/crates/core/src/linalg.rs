//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default lower bound on the smallest eigenvalue of a positive definite matrix.
pub const PD_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone().symmetric_eigenvalues().min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.clone().symmetric_eigenvalues().max()
}

/// Sorted ascending eigenvalues of a symmetric matrix.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Inverse and log-determinant of an SPD matrix via Cholesky.
pub fn spd_inverse_logdet(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    if m.nrows() == 0 {
        return Ok((DMatrix::zeros(0, 0), 0.0));
    }
    let chol = m.clone().cholesky().ok_or_else(|| Error::CholeskyFailure(what.to_string()))?;
    let logdet = chol.ln_determinant();
    Ok((symmetrize(&chol.inverse()), logdet))
}

/// `x^T A x`.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}

/// Principal submatrix on the given positions.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn subvector(x: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i]))
}
