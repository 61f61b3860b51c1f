//! Uniformly sampled multivariate trajectories.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `M` samples of a `D`-dimensional state on a uniform time grid.
///
/// Rows of `values` are samples, columns are state coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: DMatrix<f64>,
    dt: f64,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        let m = times.len();
        if values.nrows() != m {
            return Err(Error::ShapeMismatch(format!(
                "{} timestamps but {} rows of data",
                m,
                values.nrows()
            )));
        }
        if m < 2 {
            return Err(Error::RecordTooShort(format!("{m} samples, need at least 2")));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::NonFinite { row: i, col: 0 });
            }
        }
        for col in 0..values.ncols() {
            for row in 0..m {
                if !values[(row, col)].is_finite() {
                    return Err(Error::NonFinite { row, col: col + 1 });
                }
            }
        }
        let dt = (times[m - 1] - times[0]) / (m - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::NonUniformGrid { index: 0 });
        }
        // Per-step tolerance: relative 1e-12 plus the rounding floor of the
        // timestamps themselves.
        for i in 0..m - 1 {
            let step = times[i + 1] - times[i];
            let floor = 4.0 * f64::EPSILON * times[i + 1].abs().max(times[i].abs());
            if (step - dt).abs() > 1e-12 * dt + floor {
                return Err(Error::NonUniformGrid { index: i });
            }
        }
        Ok(Self { times, values, dt })
    }

    /// Samples at `t0 + m dt` for `m = 0..values.nrows()`.
    pub fn uniform(t0: f64, dt: f64, values: DMatrix<f64>) -> Result<Self> {
        let times = (0..values.nrows()).map(|m| t0 + m as f64 * dt).collect();
        Self::new(times, values)
    }

    /// Number of samples `M`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State dimension `D`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn row(&self, m: usize) -> Vec<f64> {
        self.values.row(m).iter().copied().collect()
    }

    /// The first `m` samples.
    pub fn head(&self, m: usize) -> Result<Self> {
        if m < 2 || m > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot take {m} of {} samples",
                self.len()
            )));
        }
        Ok(Self {
            times: self.times[..m].to_vec(),
            values: self.values.rows(0, m).into_owned(),
            dt: self.dt,
        })
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(self.times.clone(), values)
    }
}
