use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn cholesky_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.len() });
    }
    match a.clone().cholesky() {
        Some(chol) => Ok(chol.solve(b)),
        None => Err(Error::NotPositiveDefinite { min_eigenvalue: a.clone().symmetric_eigenvalues().min() }),
    }
}

/// `a^{-1/4}` of a symmetric positive-definite matrix.
///
/// A matrix with a non-positive eigenvalue is rejected; eigenvalues below
/// `floor` are raised to it before the power is taken.
pub fn inverse_fourth_root(a: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let eig = a.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let powered = eig.eigenvalues.map(|v| v.max(floor).powf(-0.25));
    let u = &eig.eigenvectors;
    let scaled = u * DMatrix::from_diagonal(&powered);
    Ok(symmetrize(scaled * u.transpose()))
}
