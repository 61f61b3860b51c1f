//! Adaptive test bases: centers are sampled from the cumulative total
//! variation of a smoothed derivative, so test functions cluster where the
//! trajectory moves fastest.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::test_function::TestFunction;

/// Endpoint value `phi(b - dt)` targeted by the reference shape.
pub const ENDPOINT_VALUE: f64 = 1e-16;
const P_BRACKET: (f64, f64) = (1.0, 512.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveGridConfig {
    /// Degree of the differentiating kernel.
    pub p_deriv: u32,
    /// Support of the differentiating kernel, in grid points.
    pub s_deriv: usize,
    /// Total number of centers requested.
    pub k: usize,
    /// Distance in grid points from a center to where its function is 1/2.
    pub r_whm: f64,
}

impl Default for AdaptiveGridConfig {
    fn default() -> Self {
        Self {
            p_deriv: 2,
            s_deriv: 16,
            k: 100,
            r_whm: 30.0,
        }
    }
}

impl AdaptiveGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_deriv < 1 {
            return Err(Error::InvalidArgument("p_deriv must be >= 1".into()));
        }
        if self.s_deriv < 3 {
            return Err(Error::InvalidArgument("s_deriv must be >= 3".into()));
        }
        if self.k < 1 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        if !(self.r_whm >= 2.0 && self.r_whm.is_finite()) {
            return Err(Error::InvalidArgument(format!("r_whm = {} must be >= 2", self.r_whm)));
        }
        Ok(())
    }
}

// Offsets and weights of `-dt phi'` on `(-h dt, h dt)`, excluding zero,
// for `j = 1..h`. The stencil is antisymmetric so only the right half is kept.
fn derivative_half_stencil(p: u32, half: usize, dt: f64) -> Result<Vec<f64>> {
    let w = half as f64 * dt;
    let phi = TestFunction::symmetric(p as f64, -w, w)?;
    Ok((1..half).map(|j| -dt * phi.eval_deriv(j as f64 * dt)).collect())
}

/// Smoothed derivative `v ≈ y'` by convolution with a differentiating
/// kernel, normalized to be exact on linear data.
///
/// Rows within half a kernel of either end use the truncated kernel, shifted
/// to sum to zero and rescaled to stay exact on linear data.
pub fn weak_derivative(data: &TimeSeries, p_deriv: u32, s_deriv: usize) -> Result<DMatrix<f64>> {
    let m = data.len();
    if s_deriv < 3 || s_deriv >= m {
        return Err(Error::InvalidArgument(format!(
            "kernel support {s_deriv} must lie in [3, {})",
            m
        )));
    }
    if p_deriv < 1 {
        return Err(Error::InvalidArgument("p_deriv must be >= 1".into()));
    }
    let dt = data.dt();
    let half = s_deriv / 2;
    let right = derivative_half_stencil(p_deriv, half, dt)?;
    let mut full = vec![0.0; 2 * half - 1];
    for (j, &w) in right.iter().enumerate() {
        full[half + j] = w;
        full[half - 2 - j] = -w;
    }
    let offsets: Vec<isize> = (-(half as isize) + 1..half as isize).collect();

    let interior_scale: f64 = right
        .iter()
        .enumerate()
        .map(|(j, w)| 2.0 * w * (j + 1) as f64 * dt)
        .sum();

    let y = data.values();
    let mut v = DMatrix::zeros(m, data.dim());
    for row in 0..m {
        let lo = offsets.partition_point(|&o| (row as isize) + o < 0);
        let hi = offsets.partition_point(|&o| (row as isize) + o < m as isize);
        let (weights, scale) = if lo == 0 && hi == offsets.len() {
            (full.clone(), interior_scale)
        } else {
            let mut w: Vec<f64> = full[lo..hi].to_vec();
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            w.iter_mut().for_each(|x| *x -= mean);
            let scale: f64 = w
                .iter()
                .zip(&offsets[lo..hi])
                .map(|(x, &o)| x * o as f64 * dt)
                .sum();
            let mut padded = vec![0.0; offsets.len()];
            padded[lo..hi].copy_from_slice(&w);
            (padded, scale)
        };
        for d in 0..data.dim() {
            let centre = y[(row, d)];
            let mut acc = 0.0;
            for i in lo..hi {
                let idx = (row as isize + offsets[i]) as usize;
                acc += weights[i] * (y[(idx, d)] - centre);
            }
            v[(row, d)] = acc / scale;
        }
    }
    Ok(v)
}

/// Normalized cumulative sum of `|v|`; the last entry is exactly 1.
pub fn tv_cdf_column(v: &[f64], dim: usize) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        let row = v.iter().position(|x| !x.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite { row, col: dim });
    }
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total == 0.0 {
        return Err(Error::FlatChannel { dim });
    }
    let mut acc = 0.0;
    let mut psi: Vec<f64> = v
        .iter()
        .map(|x| {
            acc += x.abs();
            (acc / total).min(1.0)
        })
        .collect();
    if let Some(last) = psi.last_mut() {
        *last = 1.0;
    }
    Ok(psi)
}

/// Per-coordinate cumulative total variation of `v`.
pub fn tv_cdf(v: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    (0..v.ncols())
        .map(|d| tv_cdf_column(v.column(d).as_slice(), d))
        .collect()
}

/// Indices `min { m : psi_m >= k / K }` for `k = 0..K`.
pub fn sample_center_indices(psi: &[f64], k: usize) -> Vec<usize> {
    let last = psi.len().saturating_sub(1);
    (0..k)
        .map(|i| {
            let u = i as f64 / k as f64;
            psi.partition_point(|&x| x < u).min(last)
        })
        .collect()
}

/// Center times for the inverse-CDF samples of `psi`.
pub fn sample_centers(psi: &[f64], t: &[f64], k: usize) -> Vec<f64> {
    sample_center_indices(psi, k).into_iter().map(|i| t[i]).collect()
}

/// Degree and half-width (in grid points) shared by every adaptive function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceShape {
    pub degree: u32,
    pub half_width: usize,
    /// Real-valued root before rounding.
    pub degree_root: f64,
}

fn half_width_at(p: f64, r: f64) -> f64 {
    r / (1.0 - 2f64.powf(-1.0 / p)).sqrt()
}

// Log of the endpoint value minus its target, as a function of the degree
// once the half-width is fixed by the half-max condition.
fn endpoint_residual(p: f64, r: f64) -> f64 {
    let x = 1.0 / half_width_at(p, r);
    p * (2.0 * x - x * x).ln() - ENDPOINT_VALUE.ln()
}

/// Solves for the shape with `phi(center ± r dt) = 1/2` and
/// `phi(b - dt) = 1e-16`. The degree is rounded up and the half-width is
/// recomputed from the half-max relation and rounded up to whole steps.
pub fn reference_shape(r_whm: f64) -> Result<ReferenceShape> {
    if !(r_whm >= 2.0 && r_whm.is_finite()) {
        return Err(Error::InvalidArgument(format!("r_whm = {r_whm} must be >= 2")));
    }
    let (mut lo, mut hi) = P_BRACKET;
    let (f_lo, f_hi) = (endpoint_residual(lo, r_whm), endpoint_residual(hi, r_whm));
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoRoot { lo, hi });
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if endpoint_residual(mid, r_whm).signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let degree = root.ceil().max(1.0) as u32;
    let half_width = (half_width_at(degree as f64, r_whm) - 1e-9).ceil() as usize;
    Ok(ReferenceShape {
        degree,
        half_width,
        degree_root: root,
    })
}

/// Reference shape placed at `center`.
pub fn solve_testfn_from_whm(center: f64, r_whm: f64, dt: f64) -> Result<TestFunction> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be > 0")));
    }
    let shape = reference_shape(r_whm)?;
    let h = shape.half_width as f64 * dt;
    TestFunction::symmetric(shape.degree as f64, center - h, center + h)
}

#[derive(Clone, Debug)]
pub struct AdaptiveBasis {
    pub functions: Vec<TestFunction>,
    /// Grid index of each center after clipping and deduplication.
    pub centers: Vec<usize>,
    pub shape: ReferenceShape,
    /// Smoothed derivative used to place the centers.
    pub derivative: DMatrix<f64>,
    /// Cumulative variation per coordinate; `None` for flat coordinates.
    pub cdf: Vec<Option<Vec<f64>>>,
    /// Centers requested per coordinate.
    pub budget: Vec<usize>,
    pub warnings: Vec<String>,
}

impl AdaptiveBasis {
    /// CSV with columns `t, v_1..v_D, psi_1..psi_D, center`, where `center`
    /// counts the functions centered at that row.
    pub fn write_diagnostics<W: Write>(&self, data: &TimeSeries, out: W) -> Result<()> {
        let d = data.dim();
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("v_{i}")));
        header.extend((1..=d).map(|i| format!("psi_{i}")));
        header.push("center".into());
        wtr.write_record(&header)?;
        let mut counts = vec![0usize; data.len()];
        for &c in &self.centers {
            counts[c] += 1;
        }
        for (m, &t) in data.times().iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend((0..d).map(|i| self.derivative[(m, i)].to_string()));
            rec.extend(self.cdf.iter().map(|c| match c {
                Some(psi) => psi[m].to_string(),
                None => String::new(),
            }));
            rec.push(counts[m].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Centers sampled per coordinate and pooled. The budget `K` is split evenly
/// over the non-flat coordinates with the remainder going to the first ones.
/// Centers too close to either end are moved inward so every support fits;
/// coincident centers are merged, so the final count can be below `K`.
pub fn build_adaptive_basis(data: &TimeSeries, cfg: &AdaptiveGridConfig) -> Result<AdaptiveBasis> {
    cfg.validate()?;
    let m = data.len();
    let shape = reference_shape(cfg.r_whm)?;
    let h = shape.half_width;
    if 2 * h + 1 > m {
        return Err(Error::RecordTooShort(format!(
            "test-function support of {} points exceeds {m} samples",
            2 * h + 1
        )));
    }
    let v = weak_derivative(data, cfg.p_deriv, cfg.s_deriv)?;
    let cdf: Vec<Option<Vec<f64>>> = (0..v.ncols())
        .map(|d| match tv_cdf_column(v.column(d).as_slice(), d) {
            Ok(psi) => Ok(Some(psi)),
            Err(Error::FlatChannel { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let active = cdf.iter().filter(|c| c.is_some()).count();
    if active == 0 {
        return Err(Error::NoVariation);
    }

    let mut budget = vec![0usize; cdf.len()];
    let (share, extra) = (cfg.k / active, cfg.k % active);
    for (rank, d) in (0..cdf.len()).filter(|&d| cdf[d].is_some()).enumerate() {
        budget[d] = share + usize::from(rank < extra);
    }

    let mut centers: Vec<usize> = Vec::with_capacity(cfg.k);
    for (psi, &kd) in cdf.iter().zip(&budget) {
        if let Some(psi) = psi {
            if kd > 0 {
                centers.extend(sample_center_indices(psi, kd).into_iter().map(|c| c.clamp(h, m - 1 - h)));
            }
        }
    }
    centers.sort_unstable();
    let requested = centers.len();
    centers.dedup();

    let mut warnings = Vec::new();
    if centers.len() < requested {
        warnings.push(format!(
            "{} coincident centers merged; using {} test functions",
            requested - centers.len(),
            centers.len()
        ));
    }
    let t = data.times();
    let functions = centers
        .iter()
        .map(|&c| TestFunction::symmetric(shape.degree as f64, t[c - h], t[c + h]))
        .collect::<Result<Vec<_>>>()?;
    Ok(AdaptiveBasis {
        functions,
        centers,
        shape,
        derivative: v,
        cdf,
        budget,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(m: usize, dt: f64, f: impl Fn(f64) -> f64) -> TimeSeries {
        let y = DMatrix::from_fn(m, 1, |i, _| f(i as f64 * dt));
        TimeSeries::uniform(0.0, dt, y).unwrap()
    }

    #[test]
    fn constant_has_zero_derivative() {
        let v = weak_derivative(&series(200, 0.01, |_| 3.3), 2, 16).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn exact_on_ramps_everywhere() {
        let v = weak_derivative(&series(300, 0.01, |t| 2.5 * t - 1.0), 2, 16).unwrap();
        for x in v.iter() {
            assert!((x - 2.5).abs() <= 1e-6 * 2.5, "{x}");
        }
    }

    #[test]
    fn sine_gives_cosine_in_interior() {
        let dt = 0.01;
        let data = series(1000, dt, f64::sin);
        let v = weak_derivative(&data, 2, 16).unwrap();
        for m in 8..992 {
            assert!((v[(m, 0)] - (m as f64 * dt).cos()).abs() <= 1e-3);
        }
    }

    #[test]
    fn cdf_examples() {
        let psi = tv_cdf_column(&[1.0; 100], 0).unwrap();
        for (m, p) in psi.iter().enumerate() {
            assert!((p - (m + 1) as f64 / 100.0).abs() < 1e-14);
        }
        let mut spike = vec![0.0; 10];
        spike[0] = 5.0;
        assert!(tv_cdf_column(&spike, 0).unwrap().iter().all(|&p| p == 1.0));
        assert!(matches!(tv_cdf_column(&[0.0; 5], 3), Err(Error::FlatChannel { dim: 3 })));
    }

    #[test]
    fn center_examples() {
        let psi: Vec<f64> = (1..=100).map(|m| m as f64 / 100.0).collect();
        let c = sample_center_indices(&psi, 4);
        assert_eq!(c[0], 0);
        for (ci, want) in c.iter().zip([0, 25, 50, 75]) {
            assert!(ci.abs_diff(want) <= 1);
        }
        let step: Vec<f64> = (0..100).map(|m| if m < 49 { 0.0 } else { 1.0 }).collect();
        assert_eq!(sample_center_indices(&step, 3), vec![0, 49, 49]);
    }

    #[test]
    fn reference_shape_at_thirty_points() {
        let s = reference_shape(30.0).unwrap();
        assert_eq!(s.degree, 10);
        let f = solve_testfn_from_whm(5.0, 30.0, 0.01).unwrap();
        let dt = 0.01;
        for t in [5.0 - 30.0 * dt, 5.0 + 30.0 * dt] {
            let v = f.eval(t);
            assert!((0.45..=0.55).contains(&v), "{v}");
        }
        assert!(f.eval(f.b() - dt) <= 1e-14);
        assert!((f.peak() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn shape_is_scale_invariant_in_dt() {
        let a = solve_testfn_from_whm(0.0, 30.0, 0.01).unwrap();
        let b = solve_testfn_from_whm(0.0, 30.0, 0.02).unwrap();
        assert_eq!(a.p(), b.p());
        assert!((b.width() - 2.0 * a.width()).abs() < 1e-12);
    }

    #[test]
    fn flat_channel_contributes_nothing() {
        let dt = 0.01;
        let y = DMatrix::from_fn(1000, 2, |i, j| if j == 0 { (i as f64 * dt).sin() } else { 1.0 });
        let data = TimeSeries::uniform(0.0, dt, y).unwrap();
        let cfg = AdaptiveGridConfig {
            k: 20,
            ..Default::default()
        };
        let basis = build_adaptive_basis(&data, &cfg).unwrap();
        assert_eq!(basis.budget, vec![20, 0]);
        assert!(basis.cdf[1].is_none());
        let h = basis.shape.half_width;
        for (f, &c) in basis.functions.iter().zip(&basis.centers) {
            assert!(c >= h && c + h < 1000);
            assert_eq!(f.p(), basis.shape.degree as f64);
            assert!(f.a() >= data.start() && f.b() <= data.end());
        }
    }

    #[test]
    fn steep_regions_get_more_centers() {
        // tanh front: nearly all variation near t = 5
        let dt = 0.01;
        let data = series(1000, dt, |t| (5.0 * (t - 5.0)).tanh());
        let cfg = AdaptiveGridConfig {
            k: 40,
            ..Default::default()
        };
        let basis = build_adaptive_basis(&data, &cfg).unwrap();
        let near = basis.centers.iter().filter(|&&c| c.abs_diff(500) < 100).count();
        assert!(near as f64 >= 0.5 * basis.centers.len() as f64);
    }

    #[test]
    fn diagnostics_have_one_row_per_sample() {
        let data = series(400, 0.01, f64::sin);
        let cfg = AdaptiveGridConfig {
            k: 5,
            ..Default::default()
        };
        let basis = build_adaptive_basis(&data, &cfg).unwrap();
        let mut buf = Vec::new();
        basis.write_diagnostics(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 401);
        assert!(text.starts_with("t,v_1,psi_1,center"));
    }

    #[test]
    fn too_short_record_is_rejected() {
        let data = series(50, 0.01, f64::sin);
        assert!(matches!(
            build_adaptive_basis(&data, &AdaptiveGridConfig::default()),
            Err(Error::RecordTooShort(_))
        ));
    }

    proptest! {
        #[test]
        fn centers_match_linear_scan(raw in proptest::collection::vec(0.0f64..1.0, 2..80), k in 1usize..20) {
            let psi = tv_cdf_column(&raw.iter().map(|x| x + 1e-3).collect::<Vec<_>>(), 0).unwrap();
            let got = sample_center_indices(&psi, k);
            for (i, &g) in got.iter().enumerate() {
                let u = i as f64 / k as f64;
                let want = (0..psi.len()).find(|&m| psi[m] >= u).unwrap();
                prop_assert_eq!(g, want);
            }
            prop_assert!(got.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*psi.last().unwrap(), 1.0);
            prop_assert!(psi.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn derivative_is_linear(a in -3.0f64..3.0, f1 in 0.5f64..3.0, f2 in 0.5f64..3.0) {
            let dt = 0.01;
            let y1 = series(120, dt, |t| (f1 * t).sin());
            let y2 = series(120, dt, |t| (f2 * t).cos() + t * t);
            let mix = y1.with_values(y1.values() * a + y2.values()).unwrap();
            let lhs = weak_derivative(&mix, 2, 16).unwrap();
            let rhs = weak_derivative(&y1, 2, 16).unwrap() * a + weak_derivative(&y2, 2, 16).unwrap();
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() <= 1e-10 * (1.0 + r.abs()));
            }
        }
    }
}
