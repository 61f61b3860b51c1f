//! Weak-form linear system `G w ≈ b` with residual covariance `Σ`.
//!
//! For a test basis `phi_1..phi_K` on a uniform grid:
//!
//! * `V[k, m]  = dt * phi_k(t_m)`
//! * `V'[k, m] = dt * phi_k'(t_m)`
//! * `G = V Θ(y)`, `b = -V' y`, `Σ = V' V'^T`
//!
//! Test functions vanish at both ends of their support, so the trapezoidal
//! end weights multiply zeros and plain `dt`-weighted sums are the
//! trapezoidal rule.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::library::TrialLibrary;
use crate::series::TimeSeries;
use crate::test_function::TestFunction;

/// Lower-triangular `C` with `C C^T = Σ + jitter I`.
#[derive(Clone, Debug)]
pub struct Whitener {
    factor: DMatrix<f64>,
    jitter: f64,
}

impl Whitener {
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Diagonal shift that was needed for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `C^{-1} x` by forward substitution.
    pub fn whiten(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.factor.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "whitener is {}x{}, operand has {} rows",
                self.factor.nrows(),
                self.factor.ncols(),
                x.nrows()
            )));
        }
        self.factor
            .solve_lower_triangular(x)
            .ok_or(Error::CholeskyFailed { jitter: self.jitter })
    }

    /// Identity whitener (`Σ = I`).
    pub fn identity(k: usize) -> Self {
        Self {
            factor: DMatrix::identity(k, k),
            jitter: 0.0,
        }
    }
}

/// Relative jitter levels tried in order, in units of `trace(Σ) / K`.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4];

/// Cholesky factor of a symmetric covariance, adding the smallest diagonal
/// jitter from the ladder that makes the factorization succeed.
pub fn cholesky_whitener(sigma: &DMatrix<f64>) -> Result<Whitener> {
    let k = sigma.nrows();
    if sigma.ncols() != k {
        return Err(Error::ShapeMismatch(format!(
            "covariance must be square, got {}x{}",
            k,
            sigma.ncols()
        )));
    }
    if k == 0 {
        return Ok(Whitener {
            factor: DMatrix::zeros(0, 0),
            jitter: 0.0,
        });
    }
    let scale = sigma.trace() / k as f64;
    let mut last = 0.0;
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        last = jitter;
        let mut shifted = sigma.clone();
        for i in 0..k {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = shifted.cholesky() {
            let factor = chol.l();
            if factor.diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok(Whitener { factor, jitter });
            }
        }
    }
    Err(Error::CholeskyFailed { jitter: last })
}

/// Integration matrices `(V, V')` for a test basis on the grid `t`.
pub fn build_quadrature(basis: &[TestFunction], t: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = t.len();
    if m < 2 {
        return Err(Error::RecordTooShort(format!("{m} samples")));
    }
    let dt = (t[m - 1] - t[0]) / (m - 1) as f64;
    let slack = 1e-9 * dt;
    let mut v = DMatrix::zeros(basis.len(), m);
    let mut vp = DMatrix::zeros(basis.len(), m);
    for (k, phi) in basis.iter().enumerate() {
        if phi.a() < t[0] - slack || phi.b() > t[m - 1] + slack {
            return Err(Error::SupportOutsideGrid {
                a: phi.a(),
                b: phi.b(),
                t0: t[0],
                t1: t[m - 1],
            });
        }
        // only grid points strictly inside the support contribute
        let first = t.partition_point(|&x| x <= phi.a());
        let last = t.partition_point(|&x| x < phi.b());
        for (i, &ti) in t.iter().enumerate().take(last).skip(first) {
            v[(k, i)] = dt * phi.eval(ti);
            vp[(k, i)] = dt * phi.eval_deriv(ti);
        }
    }
    Ok((v, vp))
}

/// Assembled weak-form system.
#[derive(Debug)]
pub struct WeakSystem {
    basis: Vec<TestFunction>,
    v: DMatrix<f64>,
    vp: DMatrix<f64>,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
    sigma: DMatrix<f64>,
    /// Column 2-norms of `Θ(y)`, when assembled from data.
    theta_norms: Option<Vec<f64>>,
    whitener: OnceLock<Whitener>,
}

impl WeakSystem {
    /// `G = V Θ(y)`, `b = -V' y`, `Σ = V' V'^T`.
    pub fn assemble(basis: &[TestFunction], library: &TrialLibrary, data: &TimeSeries) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::InvalidArgument("empty test basis".into()));
        }
        let theta = library.theta(data)?;
        let (v, vp) = build_quadrature(basis, data.times())?;
        Ok(Self::from_parts(basis.to_vec(), v, vp, &theta, data.values()))
    }

    /// Assemble from precomputed quadrature matrices and `Θ(y)`.
    pub fn from_parts(
        basis: Vec<TestFunction>,
        v: DMatrix<f64>,
        vp: DMatrix<f64>,
        theta: &DMatrix<f64>,
        y: &DMatrix<f64>,
    ) -> Self {
        let g = &v * theta;
        let b = -(&vp * y);
        let sigma = &vp * vp.transpose();
        Self {
            basis,
            v,
            vp,
            g,
            b,
            sigma,
            theta_norms: Some(theta.column_iter().map(|c| c.norm()).collect()),
            whitener: OnceLock::new(),
        }
    }

    /// Build directly from `G`, `b`, `Σ` (no quadrature matrices).
    pub fn from_matrices(g: DMatrix<f64>, b: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let k = g.nrows();
        if b.nrows() != k || sigma.nrows() != k || sigma.ncols() != k {
            return Err(Error::ShapeMismatch(format!(
                "G is {}x{}, b is {}x{}, Σ is {}x{}",
                g.nrows(),
                g.ncols(),
                b.nrows(),
                b.ncols(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        Ok(Self {
            basis: Vec::new(),
            v: DMatrix::zeros(k, 0),
            vp: DMatrix::zeros(k, 0),
            g,
            b,
            sigma,
            theta_norms: None,
            whitener: OnceLock::new(),
        })
    }

    pub fn basis(&self) -> &[TestFunction] {
        &self.basis
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn vp(&self) -> &DMatrix<f64> {
        &self.vp
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Column 2-norms of `Θ(y)`, or of `G` for systems built from matrices.
    pub fn column_norms(&self) -> Vec<f64> {
        match &self.theta_norms {
            Some(n) => n.clone(),
            None => self.g.column_iter().map(|c| c.norm()).collect(),
        }
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Number of test functions `K`.
    pub fn k(&self) -> usize {
        self.g.nrows()
    }

    /// Number of trial functions `J`.
    pub fn j(&self) -> usize {
        self.g.ncols()
    }

    /// State dimension `D`.
    pub fn d(&self) -> usize {
        self.b.ncols()
    }

    /// Cholesky factor of `Σ`, computed on first use and cached.
    pub fn whitener(&self) -> Result<&Whitener> {
        if let Some(w) = self.whitener.get() {
            return Ok(w);
        }
        let w = cholesky_whitener(&self.sigma)?;
        let _ = self.whitener.set(w);
        Ok(self.whitener.get().expect("whitener just set"))
    }

    /// Generalized residual `G w - b`.
    pub fn residual(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if w.nrows() != self.j() || w.ncols() != self.d() {
            return Err(Error::ShapeMismatch(format!(
                "weights are {}x{}, system needs {}x{}",
                w.nrows(),
                w.ncols(),
                self.j(),
                self.d()
            )));
        }
        Ok(&self.g * w - &self.b)
    }

    pub fn summary(&self) -> SystemSummary {
        SystemSummary {
            k: self.k(),
            j: self.j(),
            d: self.d(),
            rhs_norm: self.b.norm(),
            jitter: self.whitener.get().map(Whitener::jitter),
        }
    }
}

/// Dimensions and scale of an assembled system, for reports.
#[derive(Clone, Debug, Serialize)]
pub struct SystemSummary {
    pub k: usize,
    pub j: usize,
    pub d: usize,
    pub rhs_norm: f64,
    pub jitter: Option<f64>,
}
