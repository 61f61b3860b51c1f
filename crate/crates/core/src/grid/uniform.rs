//! Uniformly spaced test bases.
//!
//! The support length `L` (in grid points) comes from the dominant Fourier
//! mode of the data, the degree `p` from the target ratio
//! `ρ = ‖φ'‖∞ / ‖φ‖∞`, and the spacing from the intersection height `s` of
//! neighbouring functions.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::test_function::TestFunction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniformGridConfig {
    pub rho: f64,
    pub s: f64,
    /// Support length in grid points, bypassing the Fourier estimate.
    pub l_override: Option<usize>,
}

impl Default for UniformGridConfig {
    fn default() -> Self {
        Self {
            rho: 5.0,
            s: 0.5,
            l_override: None,
        }
    }
}

impl UniformGridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho = {} must be > 0", self.rho)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidArgument(format!("s = {} must lie in (0, 1)", self.s)));
        }
        Ok(())
    }
}

/// Test basis plus the parameters that produced it.
#[derive(Clone, Debug)]
pub struct UniformBasis {
    pub functions: Vec<TestFunction>,
    /// Grid points covered by each support, endpoints included.
    pub support_points: usize,
    pub degree: u32,
    /// Left-endpoint spacing in grid steps, before rounding.
    pub spacing_steps: f64,
    /// Grid index of each left endpoint.
    pub left_indices: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Index of the strongest nonzero Fourier mode of the mean-removed data,
/// with magnitude spectra summed over columns. Modes `1..=M/2` are searched.
pub fn dominant_mode(data: &TimeSeries) -> Result<usize> {
    let m = data.len();
    if m < 4 {
        return Err(Error::RecordTooShort(format!("{m} samples, need at least 4")));
    }
    let half = m / 2;
    let mut spectrum = vec![0.0; half + 1];
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    let mut any_signal = false;
    for col in data.values().column_iter() {
        let mean = col.mean();
        let scale = col.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        let mut buf: Vec<Complex<f64>> = col.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
        if buf.iter().all(|c| c.re.abs() <= 1e-12 * scale) {
            continue;
        }
        any_signal = true;
        fft.process(&mut buf);
        for (n, s) in spectrum.iter_mut().enumerate().skip(1) {
            *s += buf[n].norm();
        }
    }
    if !any_signal {
        return Err(Error::NoDominantMode);
    }
    let (best, _) = spectrum
        .iter()
        .enumerate()
        .skip(1)
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(best)
}

/// `L = round(M / (2 n*))`, clamped to `[4, M - 1]`.
pub fn dominant_mode_support(data: &TimeSeries) -> Result<usize> {
    let m = data.len();
    let n = dominant_mode(data)?;
    let l = (m as f64 / (2.0 * n as f64)).round() as usize;
    Ok(l.clamp(4, m - 1))
}

/// `p = ⌈ρ² (b - a)² / 2.8⌉`, at least 1.
pub fn degree_from_rho(rho: f64, support_width: f64) -> u32 {
    let p = (rho * rho * support_width * support_width / 2.8).ceil();
    if p.is_finite() && p >= 1.0 {
        p as u32
    } else {
        1
    }
}

/// Spacing between neighbouring left endpoints (in steps) for supports of
/// `steps` grid steps intersecting at height `s`.
pub fn shift_for_overlap(steps: f64, degree: f64, s: f64) -> f64 {
    steps * (1.0 - s.powf(1.0 / degree)).sqrt()
}

fn support_length(data: &TimeSeries, l_override: Option<usize>) -> Result<usize> {
    let m = data.len();
    match l_override {
        Some(l) if l < 2 || l > m => Err(Error::RecordTooShort(format!(
            "support of {l} points does not fit a record of {m} points"
        ))),
        Some(l) => Ok(l),
        None => dominant_mode_support(data),
    }
}

fn make_functions(data: &TimeSeries, degree: u32, l: usize, lefts: &[usize]) -> Result<Vec<TestFunction>> {
    let t = data.times();
    lefts
        .iter()
        .map(|&i| TestFunction::symmetric(degree as f64, t[i], t[i + l - 1]))
        .collect()
}

fn low_degree_warning(degree: u32) -> Vec<String> {
    if degree <= 1 {
        vec!["test-function degree p = 1: quadrature error of the weak derivative is only O(dt^2)".into()]
    } else {
        Vec::new()
    }
}

/// Equally spaced functions of fixed degree and support, with neighbours
/// intersecting at height `s`. `K` is however many fit in the record.
pub fn build_uniform_basis(data: &TimeSeries, cfg: &UniformGridConfig) -> Result<UniformBasis> {
    cfg.validate()?;
    let m = data.len();
    let l = support_length(data, cfg.l_override)?;
    let steps = (l - 1) as f64;
    let degree = degree_from_rho(cfg.rho, steps * data.dt());
    let spacing = shift_for_overlap(steps, degree as f64, cfg.s);
    let last_left = m - l;
    let mut lefts: Vec<usize> = Vec::new();
    for k in 0.. {
        let idx = (k as f64 * spacing).round() as usize;
        if idx > last_left {
            break;
        }
        if lefts.last() != Some(&idx) {
            lefts.push(idx);
        }
        if spacing == 0.0 {
            break;
        }
    }
    Ok(UniformBasis {
        functions: make_functions(data, degree, l, &lefts)?,
        support_points: l,
        degree,
        spacing_steps: spacing,
        left_indices: lefts,
        warnings: low_degree_warning(degree),
    })
}

/// How the degree of a square-system basis is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeSpec {
    Degree(u32),
    Rho(f64),
}

/// Exactly `J` equispaced functions spanning the whole record, so that the
/// Gram matrix is square.
pub fn basis_for_square_system(
    data: &TimeSeries,
    j: usize,
    degree: DegreeSpec,
    l_override: Option<usize>,
) -> Result<UniformBasis> {
    if j == 0 {
        return Err(Error::InvalidArgument("J must be >= 1".into()));
    }
    let m = data.len();
    let l = support_length(data, l_override)?;
    let steps = (l - 1) as f64;
    let degree = match degree {
        DegreeSpec::Degree(p) if p >= 1 => p,
        DegreeSpec::Degree(_) => return Err(Error::InvalidArgument("degree must be >= 1".into())),
        DegreeSpec::Rho(rho) => degree_from_rho(rho, steps * data.dt()),
    };
    let free = m - l;
    let (lefts, spacing) = if j == 1 {
        (vec![free / 2], 0.0)
    } else {
        if free < j - 1 {
            return Err(Error::RecordTooShort(format!(
                "{j} distinct supports of {l} points do not fit in {m} points"
            )));
        }
        let spacing = free as f64 / (j - 1) as f64;
        let lefts = (0..j).map(|k| (k as f64 * spacing).round() as usize).collect();
        (lefts, spacing)
    };
    Ok(UniformBasis {
        functions: make_functions(data, degree, l, &lefts)?,
        support_points: l,
        degree,
        spacing_steps: spacing,
        left_indices: lefts,
        warnings: low_degree_warning(degree),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn tone(m: usize, cycles: f64, extra_zero_col: bool) -> TimeSeries {
        let cols = if extra_zero_col { 2 } else { 1 };
        let y = DMatrix::from_fn(m, cols, |i, j| {
            if j == 0 {
                (2.0 * PI * cycles * i as f64 / m as f64).sin()
            } else {
                0.0
            }
        });
        TimeSeries::uniform(0.0, 0.01, y).unwrap()
    }

    // Direct O(M^2) DFT as an independent check of the FFT path.
    fn naive_peak(y: &[f64]) -> usize {
        let m = y.len();
        let mean = y.iter().sum::<f64>() / m as f64;
        (1..=m / 2)
            .map(|n| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in y.iter().enumerate() {
                    let th = -2.0 * PI * (n * i) as f64 / m as f64;
                    re += (v - mean) * th.cos();
                    im += (v - mean) * th.sin();
                }
                (n, (re * re + im * im).sqrt())
            })
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
            .0
    }

    #[test]
    fn pure_tone_support() {
        let data = tone(1000, 5.0, false);
        let y: Vec<f64> = data.values().column(0).iter().copied().collect();
        assert_eq!(naive_peak(&y), 5);
        assert_eq!(dominant_mode(&data).unwrap(), 5);
        assert_eq!(dominant_mode_support(&data).unwrap(), 100);
        assert_eq!(dominant_mode_support(&tone(1000, 5.0, true)).unwrap(), 100);
    }

    #[test]
    fn constant_data_has_no_mode() {
        let data = TimeSeries::uniform(0.0, 0.1, DMatrix::from_element(50, 2, 3.7)).unwrap();
        assert!(matches!(dominant_mode_support(&data), Err(Error::NoDominantMode)));
    }

    #[test]
    fn degree_examples() {
        assert_eq!(degree_from_rho(1.0, 1.0), 1);
        assert_eq!(degree_from_rho(5.0, 2.0), 36);
        assert_eq!(degree_from_rho(10.0, 2.0), 143);
        assert_eq!(degree_from_rho(1e-6, 1.0), 1);
    }

    #[test]
    fn degree_round_trip_through_sup_ratio() {
        let check = |rho: f64, w: f64| {
            let p = degree_from_rho(rho, w) as f64;
            let r = TestFunction::symmetric(p, 0.0, w).unwrap().sup_ratio().unwrap();
            assert!(r >= 0.8 * rho && r <= 1.3 * rho, "rho {rho} w {w}: p {p} gives {r}");
        };
        for i in 0..=10 {
            check(4.0 + 0.1 * i as f64, 1.0);
        }
        for i in 0..=40 {
            check(1.0 + 0.1 * i as f64, 5.0);
        }
    }

    #[test]
    fn spacing_examples() {
        assert!((shift_for_overlap(10.0, 1.0, 0.75) - 5.0).abs() < 1e-12);
        assert!((shift_for_overlap(10.0, 1.0, 1e-12) - 10.0).abs() < 1e-3);
    }

    #[test]
    fn small_s_gives_disjoint_supports() {
        let data = tone(1000, 5.0, false);
        let cfg = UniformGridConfig {
            rho: 1.0,
            s: 1e-9,
            l_override: None,
        };
        let basis = build_uniform_basis(&data, &cfg).unwrap();
        assert_eq!(basis.support_points, 100);
        assert_eq!(basis.functions.len(), 1000 / 100);
        for pair in basis.functions.windows(2) {
            assert!(pair[1].a() >= pair[0].b() - 1e-6 * data.dt());
        }
    }

    #[test]
    fn neighbours_intersect_at_s() {
        let data = tone(2000, 4.0, false);
        let cfg = UniformGridConfig {
            rho: 3.0,
            s: 0.5,
            l_override: None,
        };
        let basis = build_uniform_basis(&data, &cfg).unwrap();
        let (f, g) = (basis.functions[0], basis.functions[1]);
        let mid = 0.5 * (f.peak() + g.peak());
        // spacing is rounded to the grid, so the height is only approximately s
        assert!((f.eval(mid) - 0.5).abs() < 0.05);
        assert!((f.eval(mid) - g.eval(mid)).abs() < 1e-12);
        assert!(basis.functions.last().unwrap().b() <= data.end() + 1e-12);
    }

    #[test]
    fn square_system_examples() {
        let data = tone(1000, 5.0, false);
        let one = basis_for_square_system(&data, 1, DegreeSpec::Degree(4), None).unwrap();
        assert_eq!(one.functions.len(), 1);
        let c = one.functions[0].peak();
        assert!((c - 0.5 * (data.start() + data.end())).abs() <= data.dt());

        let tiled = basis_for_square_system(&data, 10, DegreeSpec::Degree(4), None).unwrap();
        assert_eq!(tiled.left_indices, (0..10).map(|k| 100 * k).collect::<Vec<_>>());
        for pair in tiled.functions.windows(2) {
            assert!(pair[1].a() > pair[0].b());
        }
        assert!(basis_for_square_system(&data, 2000, DegreeSpec::Degree(4), None).is_err());
    }
}
