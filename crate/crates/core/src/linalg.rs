//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Log-determinant of an SPD matrix via Cholesky.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Inverse of an SPD matrix via Cholesky.
pub fn inverse_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let inv = chol.inverse();
    Ok(symmetrize(&inv))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `x^T m x`.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}
