//! Generalized least squares with sequential thresholding.
//!
//! Each output dimension `d` solves
//! `min_w (G w - b_d)^T Σ^{-1} (G w - b_d) + γ² ‖w‖²`
//! over its own active set. With `Σ = C C^T` this is ordinary least squares
//! on `[C^{-1} G; γ I] w ≈ [C^{-1} b_d; 0]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weak_system::{WeakSystem, Whitener};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Sparsity threshold, compared against unscaled weights.
    pub lambda: f64,
    /// ℓ2 regularization coefficient.
    pub gamma: f64,
    /// Solve in coordinates where the columns of `Θ(y)` have unit 2-norm.
    pub normalize_columns: bool,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.001,
            gamma: 0.0,
            normalize_columns: false,
            max_iterations: 25,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda = {} < 0", self.lambda)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("gamma = {} < 0", self.gamma)));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sparse `J x D` coefficient matrix with its support.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
    support: DMatrix<bool>,
    iterations: usize,
    converged: bool,
    converged_dims: Vec<bool>,
}

impl WeightMatrix {
    /// Wrap a dense matrix; the support is its nonzero pattern.
    pub fn from_dense(w: DMatrix<f64>) -> Self {
        let support = w.map(|x| x != 0.0);
        let d = w.ncols();
        Self {
            w,
            support,
            iterations: 0,
            converged: true,
            converged_dims: vec![true; d],
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn support(&self) -> &DMatrix<bool> {
        &self.support
    }

    /// Largest iteration count over output dimensions.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn converged_dims(&self) -> &[bool] {
        &self.converged_dims
    }

    pub fn nnz(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }
}

/// `C^{-1} G D^{-1}` and `C^{-1} b`, with `D` the optional column scaling.
struct Prepared {
    a: DMatrix<f64>,
    rhs: DMatrix<f64>,
    col_scale: Vec<f64>,
}

fn prepare(g: &DMatrix<f64>, b: &DMatrix<f64>, whitener: &Whitener, norms: Option<Vec<f64>>) -> Result<Prepared> {
    let col_scale: Vec<f64> = match norms {
        Some(n) => n.into_iter().map(|x| if x > 0.0 { x } else { 1.0 }).collect(),
        None => vec![1.0; g.ncols()],
    };
    let mut scaled = g.clone();
    for (j, s) in col_scale.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }
    Ok(Prepared {
        a: whitener.whiten(&scaled)?,
        rhs: whitener.whiten(b)?,
        col_scale,
    })
}

/// Ridge least squares on the columns `cols` of `a`: `[a_S; γ I] x ≈ [rhs; 0]`.
///
/// Solved by Householder QR after scaling each stacked column to unit norm,
/// which leaves the minimizer unchanged but makes the rank test meaningful.
fn ridge_solve(a: &DMatrix<f64>, rhs: &DVector<f64>, cols: &[usize], gamma: f64) -> Result<DVector<f64>> {
    let k = a.nrows();
    let n = cols.len();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let extra = if gamma > 0.0 { n } else { 0 };
    let rows = k + extra;
    if rows < n {
        return Err(Error::RankDeficient { rank: rows, cols: n });
    }
    let mut stacked = DMatrix::zeros(rows, n);
    for (c, &j) in cols.iter().enumerate() {
        stacked.view_mut((0, c), (k, 1)).copy_from(&a.column(j));
        if gamma > 0.0 {
            stacked[(k + c, c)] = gamma;
        }
    }
    let mut scale = vec![1.0; n];
    for (c, s) in scale.iter_mut().enumerate() {
        let norm = stacked.column(c).norm();
        if norm > 0.0 {
            *s = norm;
            stacked.column_mut(c).unscale_mut(norm);
        }
    }
    let mut y = DVector::zeros(rows);
    y.rows_mut(0, k).copy_from(rhs);

    let qr = stacked.qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = rows.max(n) as f64 * f64::EPSILON * diag_max;
    let rank = r.diagonal().iter().filter(|x| x.abs() > tol).count();
    if rank < n || diag_max == 0.0 {
        return Err(Error::RankDeficient { rank, cols: n });
    }
    qr.q_tr_mul(&mut y);
    let mut x = r
        .solve_upper_triangular(&y.rows(0, n).into_owned())
        .ok_or(Error::RankDeficient { rank, cols: n })?;
    for (c, s) in scale.iter().enumerate() {
        x[c] /= s;
    }
    Ok(x)
}

/// Regularized GLS restricted to `active[j][d]` per output dimension.
/// Inactive entries of the result are exactly zero.
pub fn gls_solve(
    g: &DMatrix<f64>,
    b: &DMatrix<f64>,
    whitener: &Whitener,
    gamma: f64,
    active: &DMatrix<bool>,
) -> Result<DMatrix<f64>> {
    if active.shape() != (g.ncols(), b.ncols()) {
        return Err(Error::ShapeMismatch(format!(
            "active mask is {:?}, expected {:?}",
            active.shape(),
            (g.ncols(), b.ncols())
        )));
    }
    let prep = prepare(g, b, whitener, None)?;
    let mut w = DMatrix::zeros(g.ncols(), b.ncols());
    for d in 0..b.ncols() {
        let cols: Vec<usize> = (0..g.ncols()).filter(|&j| active[(j, d)]).collect();
        let x = ridge_solve(&prep.a, &prep.rhs.column(d).into_owned(), &cols, gamma)?;
        for (c, &j) in cols.iter().enumerate() {
            w[(j, d)] = x[c];
        }
    }
    Ok(w)
}

/// Sequentially thresholded GLS on an assembled system.
///
/// Per output dimension: solve on the active set, drop entries with
/// `|w| < λ`, and repeat until the support stops changing. An emptied
/// support yields an all-zero column flagged as not converged.
pub fn sequential_threshold(ws: &WeakSystem, cfg: &SolverConfig) -> Result<WeightMatrix> {
    cfg.validate()?;
    let whitener = ws.whitener()?;
    let prep = prepare(ws.g(), ws.b(), whitener, cfg.normalize_columns.then(|| ws.column_norms()))?;
    let j = ws.j();
    let dims = ws.d();
    let mut w = DMatrix::zeros(j, dims);
    let mut support = DMatrix::from_element(j, dims, false);
    let mut iterations = 0;
    let mut converged_dims = vec![false; dims];

    for d in 0..dims {
        let rhs = prep.rhs.column(d).into_owned();
        let mut cols: Vec<usize> = (0..j).collect();
        let mut coef = DVector::zeros(0);
        let mut done = false;
        let mut iters = 0;
        while iters < cfg.max_iterations {
            iters += 1;
            coef = ridge_solve(&prep.a, &rhs, &cols, cfg.gamma)?;
            for (c, &col) in cols.iter().enumerate() {
                coef[c] /= prep.col_scale[col];
            }
            let keep: Vec<usize> = (0..cols.len()).filter(|&c| coef[c].abs() >= cfg.lambda).collect();
            if keep.len() == cols.len() {
                done = true;
                break;
            }
            cols = keep.iter().map(|&c| cols[c]).collect();
            if cols.is_empty() {
                coef = DVector::zeros(0);
                break;
            }
        }
        if !done && !cols.is_empty() && cols.len() != coef.len() {
            // hit the iteration cap right after shrinking the support
            coef = ridge_solve(&prep.a, &rhs, &cols, cfg.gamma)?;
            for (c, &col) in cols.iter().enumerate() {
                coef[c] /= prep.col_scale[col];
            }
        }
        for (c, &col) in cols.iter().enumerate() {
            w[(col, d)] = coef[c];
            support[(col, d)] = true;
        }
        converged_dims[d] = done && !cols.is_empty();
        iterations = iterations.max(iters);
    }

    Ok(WeightMatrix {
        w,
        support,
        iterations,
        converged: converged_dims.iter().all(|&c| c),
        converged_dims,
    })
}

/// A quarter of the smallest nonzero magnitude in a reference weight matrix.
pub fn default_lambda(w_star: &DMatrix<f64>) -> Result<f64> {
    w_star
        .iter()
        .filter(|&&x| x != 0.0)
        .map(|x| x.abs())
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
        .map(|m| m / 4.0)
        .ok_or(Error::ZeroReference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weak_system::cholesky_whitener;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(g: DMatrix<f64>, b: DMatrix<f64>, sigma: DMatrix<f64>) -> WeakSystem {
        WeakSystem::from_matrices(g, b, sigma).unwrap()
    }

    fn all_active(j: usize, d: usize) -> DMatrix<bool> {
        DMatrix::from_element(j, d, true)
    }

    #[test]
    fn identity_system() {
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 0.05, 2.0]);
        let w = gls_solve(&DMatrix::identity(3, 3), &b, &Whitener::identity(3), 0.0, &all_active(3, 1)).unwrap();
        assert_relative_eq!(w, b, epsilon = 1e-15);

        let scaled = cholesky_whitener(&(DMatrix::identity(3, 3) * 4.0)).unwrap();
        let w4 = gls_solve(&DMatrix::identity(3, 3), &b, &scaled, 0.0, &all_active(3, 1)).unwrap();
        assert_relative_eq!(w4, b, epsilon = 1e-14);
    }

    #[test]
    fn ridge_shrinks_monotonically() {
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 0.2, 1.0, 0.3, 0.3, 1.0, -1.0]);
        let b = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 0.5, -0.5]);
        let mut prev = f64::INFINITY;
        for gamma in [0.0, 1.0, 10.0, 100.0] {
            let w = gls_solve(&g, &b, &Whitener::identity(4), gamma, &all_active(2, 1)).unwrap();
            assert!(w.norm() < prev);
            prev = w.norm();
        }
        assert!(prev < 0.01);
    }

    #[test]
    fn inactive_entries_are_zero() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 2.0]);
        let mut active = all_active(2, 1);
        active[(1, 0)] = false;
        let w = gls_solve(&g, &b, &Whitener::identity(3), 0.0, &active).unwrap();
        assert_eq!(w[(1, 0)], 0.0);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        let err = gls_solve(&g, &b, &Whitener::identity(3), 0.0, &all_active(2, 1)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 1, cols: 2 }));
        assert!(err.to_string().contains("increase gamma"));
        // regularization restores solvability
        assert!(gls_solve(&g, &b, &Whitener::identity(3), 0.1, &all_active(2, 1)).is_ok());
    }

    #[test]
    fn threshold_example() {
        let ws = system(
            DMatrix::identity(3, 3),
            DMatrix::from_column_slice(3, 1, &[1.0, 0.05, 2.0]),
            DMatrix::identity(3, 3),
        );
        let cfg = SolverConfig {
            lambda: 0.1,
            ..SolverConfig::default()
        };
        let w = sequential_threshold(&ws, &cfg).unwrap();
        assert_relative_eq!(w.weights()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(w.weights()[(1, 0)], 0.0);
        assert_relative_eq!(w.weights()[(2, 0)], 2.0, epsilon = 1e-15);
        assert_eq!(w.iterations(), 2);
        assert!(w.converged());
    }

    #[test]
    fn zero_lambda_is_plain_gls() {
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 0.2, 1.0, 0.3, 0.3, 1.0, -1.0]);
        let b = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 0.5, -0.5]);
        let ws = system(g.clone(), b.clone(), DMatrix::identity(4, 4));
        let cfg = SolverConfig {
            lambda: 0.0,
            ..SolverConfig::default()
        };
        let w = sequential_threshold(&ws, &cfg).unwrap();
        let plain = gls_solve(&g, &b, &Whitener::identity(4), 0.0, &all_active(2, 1)).unwrap();
        assert_eq!(w.weights(), &plain);
        assert!(w.support().iter().all(|&s| s));
        assert_eq!(w.iterations(), 1);
    }

    #[test]
    fn huge_lambda_empties_support() {
        let ws = system(
            DMatrix::identity(2, 2),
            DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
            DMatrix::identity(2, 2),
        );
        let cfg = SolverConfig {
            lambda: 10.0,
            ..SolverConfig::default()
        };
        let w = sequential_threshold(&ws, &cfg).unwrap();
        assert_eq!(w.nnz(), 0);
        assert!(!w.converged());
    }

    #[test]
    fn default_lambda_examples() {
        let w = DMatrix::from_column_slice(4, 1, &[0.2, 0.0, 0.05, 1.0]);
        assert_relative_eq!(default_lambda(&w).unwrap(), 0.0125);
        assert_relative_eq!(default_lambda(&DMatrix::from_element(1, 1, 1.0)).unwrap(), 0.25);
        assert_relative_eq!(
            default_lambda(&DMatrix::from_column_slice(2, 1, &[10.0, -2.0])).unwrap(),
            0.5
        );
        assert!(matches!(default_lambda(&DMatrix::zeros(2, 2)), Err(Error::ZeroReference)));
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn whitening_matches_explicit_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let g = random_matrix(&mut rng, 20, 8);
            let b = random_matrix(&mut rng, 20, 2);
            let a = random_matrix(&mut rng, 20, 20);
            let sigma = &a * a.transpose() + DMatrix::identity(20, 20) * 0.1;
            let wh = cholesky_whitener(&sigma).unwrap();
            let w = gls_solve(&g, &b, &wh, 0.0, &all_active(8, 2)).unwrap();

            let cg = wh.factor().clone().solve_lower_triangular(&g).unwrap();
            let cb = wh.factor().clone().solve_lower_triangular(&b).unwrap();
            // normal equations on the explicitly whitened system
            let ols = (cg.transpose() * &cg).lu().solve(&(cg.transpose() * cb)).unwrap();
            assert!((&w - &ols).norm() <= 1e-10 * ols.norm().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn thresholding_is_a_fixed_point(seed in 0u64..500, lambda in 0.05f64..0.6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_matrix(&mut rng, 15, 6);
            let b = random_matrix(&mut rng, 15, 2);
            let ws = system(g.clone(), b.clone(), DMatrix::identity(15, 15));
            let cfg = SolverConfig { lambda, ..SolverConfig::default() };
            let first = sequential_threshold(&ws, &cfg).unwrap();
            // re-run restricted to the support found
            let again = gls_solve(&g, &b, &Whitener::identity(15), 0.0, first.support()).unwrap();
            for d in 0..2 {
                if first.converged_dims()[d] {
                    for j in 0..6 {
                        prop_assert!((again[(j, d)] - first.weights()[(j, d)]).abs() < 1e-10);
                        if first.support()[(j, d)] {
                            prop_assert!(again[(j, d)].abs() >= lambda);
                        }
                    }
                }
            }
        }

        #[test]
        fn permuting_columns_permutes_rows(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_matrix(&mut rng, 12, 5);
            let b = random_matrix(&mut rng, 12, 1);
            let perm = [3usize, 0, 4, 1, 2];
            let gp = DMatrix::from_fn(12, 5, |i, j| g[(i, perm[j])]);
            let cfg = SolverConfig { lambda: 0.1, ..SolverConfig::default() };
            let w = sequential_threshold(&system(g, b.clone(), DMatrix::identity(12, 12)), &cfg).unwrap();
            let wp = sequential_threshold(&system(gp, b, DMatrix::identity(12, 12)), &cfg).unwrap();
            for j in 0..5 {
                prop_assert!((wp.weights()[(j, 0)] - w.weights()[(perm[j], 0)]).abs() < 1e-10);
            }
        }

        #[test]
        fn support_never_grows(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_matrix(&mut rng, 10, 6);
            let b = random_matrix(&mut rng, 10, 1);
            let ws = system(g, b, DMatrix::identity(10, 10));
            let mut prev = 6;
            for iters in 1..6 {
                let cfg = SolverConfig { lambda: 0.3, max_iterations: iters, ..SolverConfig::default() };
                let w = sequential_threshold(&ws, &cfg).unwrap();
                prop_assert!(w.nnz() <= prev);
                prev = w.nnz();
            }
        }
    }
}
