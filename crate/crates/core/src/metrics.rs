//! Coefficient, trajectory and support-recovery errors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `‖w_hat - w_star‖_F / ‖w_star‖_F`.
pub fn coeff_error(w_hat: &DMatrix<f64>, w_star: &DMatrix<f64>) -> Result<f64> {
    same_shape(w_hat, w_star)?;
    let denom = w_star.norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((w_hat - w_star).norm() / denom)
}

/// Relative error of each column; `None` where the reference column is zero.
pub fn coeff_error_per_dim(w_hat: &DMatrix<f64>, w_star: &DMatrix<f64>) -> Result<Vec<Option<f64>>> {
    same_shape(w_hat, w_star)?;
    Ok((0..w_star.ncols())
        .map(|d| {
            let denom = w_star.column(d).norm();
            (denom > 0.0).then(|| (w_hat.column(d) - w_star.column(d)).norm() / denom)
        })
        .collect())
}

/// Stacked relative ℓ2 error over the first `window` samples (all if `None`).
pub fn traj_error(x_dd: &TimeSeries, x: &TimeSeries, window: Option<usize>) -> Result<f64> {
    if x_dd.dim() != x.dim() {
        return Err(Error::ShapeMismatch(format!("dimension {} vs {}", x_dd.dim(), x.dim())));
    }
    let m = window.unwrap_or(x.len()).min(x.len());
    if m > x_dd.len() {
        return Err(Error::ShapeMismatch(format!(
            "model trajectory has {} samples, {m} needed",
            x_dd.len()
        )));
    }
    for i in 0..m {
        let (a, b) = (x_dd.times()[i], x.times()[i]);
        if (a - b).abs() > 1e-6 * x.dt() {
            return Err(Error::NonUniformGrid { index: i });
        }
    }
    let (num, den) = (0..m).fold((0.0, 0.0), |(n, d), i| {
        let mut n = n;
        let mut d = d;
        for k in 0..x.dim() {
            let (a, b) = (x_dd.values()[(i, k)], x.values()[(i, k)]);
            n += (a - b) * (a - b);
            d += b * b;
        }
        (n, d)
    });
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Comparison of nonzero patterns (`w != 0` exactly).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub exact: bool,
    pub false_positives: usize,
    pub false_negatives: usize,
}

pub fn support_metrics(w_hat: &DMatrix<f64>, w_star: &DMatrix<f64>) -> Result<SupportMetrics> {
    same_shape(w_hat, w_star)?;
    let (mut fp, mut fn_) = (0, 0);
    for (a, b) in w_hat.iter().zip(w_star.iter()) {
        match (*a != 0.0, *b != 0.0) {
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(SupportMetrics {
        exact: fp == 0 && fn_ == 0,
        false_positives: fp,
        false_negatives: fn_,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub coeff_error: f64,
    pub coeff_error_per_dim: Vec<Option<f64>>,
    pub traj_error: Option<f64>,
    pub support_exact: bool,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `‖G w_hat - b‖_F`.
    pub residual_norm: f64,
}

impl RecoveryReport {
    pub fn new(w_hat: &DMatrix<f64>, w_star: &DMatrix<f64>, residual_norm: f64, traj_error: Option<f64>) -> Result<Self> {
        let s = support_metrics(w_hat, w_star)?;
        Ok(Self {
            coeff_error: coeff_error(w_hat, w_star)?,
            coeff_error_per_dim: coeff_error_per_dim(w_hat, w_star)?,
            traj_error,
            support_exact: s.exact,
            false_positives: s.false_positives,
            false_negatives: s.false_negatives,
            residual_norm,
        })
    }
}
