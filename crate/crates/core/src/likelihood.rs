//! Gaussian interval likelihoods, cluster moments, and the SCAD penalty.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ingest::WindowBatch;
use crate::linalg::{log_det_spd, quad_form, symmetrize};
use crate::toeplitz::ToeplitzMatrix;

/// Default SCAD shape parameter.
pub const DEFAULT_SCAD_A: f64 = 3.7;

/// Mean vectors and shared block-Toeplitz precision of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    mean_lower: DVector<f64>,
    mean_upper: DVector<f64>,
    precision: ToeplitzMatrix,
    dense: DMatrix<f64>,
    log_det: f64,
    lambda: f64,
}

impl ClusterModel {
    pub fn new(
        mean_lower: DVector<f64>,
        mean_upper: DVector<f64>,
        precision: ToeplitzMatrix,
        lambda: f64,
    ) -> Result<Self> {
        let d = precision.dim();
        for m in [&mean_lower, &mean_upper] {
            if m.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.len(),
                });
            }
        }
        let dense = precision.to_dense();
        let log_det = log_det_spd(&dense)?;
        Ok(Self {
            mean_lower,
            mean_upper,
            precision,
            dense,
            log_det,
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.precision.dim()
    }

    pub fn mean_lower(&self) -> &DVector<f64> {
        &self.mean_lower
    }

    pub fn mean_upper(&self) -> &DVector<f64> {
        &self.mean_upper
    }

    pub fn precision(&self) -> &ToeplitzMatrix {
        &self.precision
    }

    /// Dense view of the precision matrix.
    pub fn precision_dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Per-cluster sample means and MLE covariances of both bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMoments {
    pub count: usize,
    pub mean_lower: DVector<f64>,
    pub mean_upper: DVector<f64>,
    pub cov_lower: DMatrix<f64>,
    pub cov_upper: DMatrix<f64>,
}

impl ClusterMoments {
    /// `S_lower + S_upper`.
    pub fn scatter_sum(&self) -> DMatrix<f64> {
        &self.cov_lower + &self.cov_upper
    }

    pub fn dim(&self) -> usize {
        self.mean_lower.len()
    }
}

/// Gaussian negative log-likelihood of `y` with precision `precision`.
///
/// `log_det` must be the log-determinant of `precision`. The normalizing
/// constant uses the full vector dimension.
pub fn neg_log_lik(
    y: &DVector<f64>,
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    log_det: f64,
) -> Result<f64> {
    let d = precision.nrows();
    for len in [y.len(), mean.len(), precision.ncols()] {
        if len != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: len,
            });
        }
    }
    let r = y - mean;
    Ok(0.5 * quad_form(precision, &r) - 0.5 * log_det + 0.5 * d as f64 * (2.0 * PI).ln())
}

/// Lower plus upper bound negative log-likelihood under one cluster.
pub fn cluster_cost(lower: &DVector<f64>, upper: &DVector<f64>, model: &ClusterModel) -> Result<f64> {
    Ok(neg_log_lik(lower, &model.mean_lower, &model.dense, model.log_det)?
        + neg_log_lik(upper, &model.mean_upper, &model.dense, model.log_det)?)
}

/// Means and divisor-`m` covariances of the member windows.
pub fn empirical_moments(batch: &WindowBatch, members: &[usize]) -> Result<ClusterMoments> {
    if members.is_empty() {
        return Err(Error::EmptyCluster(0));
    }
    let m = members.len() as f64;
    let mean_cov = |vecs: &[DVector<f64>]| {
        let d = batch.dim();
        let mut mean = DVector::zeros(d);
        for &r in members {
            mean += &vecs[r];
        }
        mean /= m;
        let mut cov = DMatrix::zeros(d, d);
        for &r in members {
            let c = &vecs[r] - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= m;
        (mean, symmetrize(&cov))
    };
    let (mean_lower, cov_lower) = mean_cov(batch.lower_vecs());
    let (mean_upper, cov_upper) = mean_cov(batch.upper_vecs());
    Ok(ClusterMoments {
        count: members.len(),
        mean_lower,
        mean_upper,
        cov_lower,
        cov_upper,
    })
}

fn check_a(a: f64) -> Result<()> {
    if a > 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidA(a))
    }
}

/// SCAD penalty value at magnitude `b`.
pub fn scad(b: f64, lambda: f64, a: f64) -> Result<f64> {
    check_a(a)?;
    let b = b.abs();
    Ok(if b <= lambda {
        lambda * b
    } else if b <= a * lambda {
        (2.0 * a * lambda * b - b * b - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        lambda * lambda * (a + 1.0) / 2.0
    })
}

/// Derivative of the SCAD penalty in `b`; the LLA weight.
pub fn scad_derivative(b: f64, lambda: f64, a: f64) -> Result<f64> {
    check_a(a)?;
    let b = b.abs();
    Ok(if b <= lambda {
        lambda
    } else {
        (a * lambda - b).max(0.0) / (a - 1.0)
    })
}
