//! Dormand–Prince 5(4) with the 4th-order continuous extension, sampled on
//! a fixed output grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Abort once any state component exceeds this magnitude.
    pub blowup: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            blowup: 1e8,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be > 0".into()));
        }
        if !(self.blowup > 0.0) {
            return Err(Error::InvalidArgument("blowup bound must be > 0".into()));
        }
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y1: Vec<f64>,
    err: Vec<f64>,
    dense: [Vec<f64>; 5],
}

impl Workspace {
    fn new(n: usize) -> Self {
        let v = || vec![0.0; n];
        Self {
            k: [v(), v(), v(), v(), v(), v(), v()],
            tmp: v(),
            y1: v(),
            err: v(),
            dense: [v(), v(), v(), v(), v()],
        }
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F>(f: &F, t0: f64, y0: &[f64], f0: &[f64], span: f64, cfg: &IntegratorConfig) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len() as f64;
    let scale = |i: usize| cfg.abs_tol + cfg.rel_tol * y0[i].abs();
    let d0 = (y0.iter().enumerate().map(|(i, y)| (y / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, y)| (y / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, k)| y + h0 * k).collect();
    let mut f1 = vec![0.0; y0.len()];
    f(t0 + h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .enumerate()
        .map(|(i, (a, b))| ((a - b) / scale(i)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates `x' = f(t, x)` from `(t0, x0)` and returns the states at the
/// nondecreasing `samples`, all of which must be `>= t0`. Rows are samples.
pub fn integrate_on_grid<F>(f: F, t0: f64, x0: &[f64], samples: &[f64], cfg: &IntegratorConfig) -> Result<DMatrix<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty state".into()));
    }
    if samples.iter().any(|&s| s < t0) || samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "samples must be nondecreasing and not before the initial time".into(),
        ));
    }
    let mut out = DMatrix::zeros(samples.len(), n);
    let Some(&t_end) = samples.last() else {
        return Ok(out);
    };
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t: t0 });
    }

    let mut ws = Workspace::new(n);
    let mut t = t0;
    let mut y = x0.to_vec();
    f(t, &y, &mut ws.k[0]);
    let mut next = 0;
    while next < samples.len() && samples[next] == t0 {
        out.row_mut(next).copy_from_slice(&y);
        next += 1;
    }
    if next == samples.len() {
        return Ok(out);
    }
    let span = t_end - t0;
    let mut h = initial_step(&f, t, &y, &ws.k[0], span, cfg);
    let mut steps = 0;
    let mut last_rejected = false;

    while next < samples.len() {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::StepSizeUnderflow { t });
        }
        if t + h > t_end {
            h = t_end - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t });
        }

        let Workspace { k, tmp, y1, err, dense } = &mut ws;
        let [k1, k2, k3, k4, k5, k6, k7] = k;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, tmp, k6);
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, y1, k7);
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(err, &y, y1, cfg);
        if !e.is_finite() {
            if h <= 1e-12 * span {
                return Err(Error::NonFiniteState { t });
            }
            h *= FAC_MIN;
            last_rejected = true;
            continue;
        }

        if e <= 1.0 {
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                dense[0][i] = y[i];
                dense[1][i] = ydiff;
                dense[2][i] = bspl;
                dense[3][i] = ydiff - h * k7[i] - bspl;
                dense[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if t + h >= t_end { t_end } else { t + h };
            while next < samples.len() && samples[next] <= t_new {
                let theta = (samples[next] - t) / h;
                let theta1 = 1.0 - theta;
                let mut row = out.row_mut(next);
                for i in 0..n {
                    row[i] = dense[0][i]
                        + theta * (dense[1][i] + theta1 * (dense[2][i] + theta * (dense[3][i] + theta1 * dense[4][i])));
                }
                next += 1;
            }
            t = t_new;
            y.copy_from_slice(y1);
            k1.copy_from_slice(k7);
            if let Some(bad) = y.iter().find(|v| !v.is_finite() || v.abs() > cfg.blowup) {
                return Err(if bad.is_finite() {
                    Error::Blowup { t, bound: cfg.blowup }
                } else {
                    Error::NonFiniteState { t }
                });
            }
            let mut fac = (SAFETY * e.max(1e-10).powf(-0.2)).clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            h *= (SAFETY * e.powf(-0.2)).max(FAC_MIN);
            last_rejected = true;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let samples: Vec<f64> = (0..=100).map(|m| m as f64 * 0.01).collect();
        let x = integrate_on_grid(|_, x, dx| dx[0] = -x[0], 0.0, &[1.0], &samples, &IntegratorConfig::default()).unwrap();
        for (m, &t) in samples.iter().enumerate() {
            assert!((x[(m, 0)] - (-t).exp()).abs() <= 1e-9);
        }
        assert!((x[(100, 0)] - (-1.0f64).exp()).abs() <= 1e-9);
    }

    #[test]
    fn harmonic_oscillator_returns() {
        let tau = 2.0 * std::f64::consts::PI;
        let samples: Vec<f64> = (0..=1000).map(|m| tau * m as f64 / 1000.0).collect();
        let x = integrate_on_grid(
            |_, x, dx| {
                dx[0] = x[1];
                dx[1] = -x[0];
            },
            0.0,
            &[1.0, 0.0],
            &samples,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!((x[(1000, 0)] - 1.0).abs() <= 1e-8 && x[(1000, 1)].abs() <= 1e-8);
        for m in 0..=1000 {
            let energy = x[(m, 0)].powi(2) + x[(m, 1)].powi(2);
            assert!((energy - 1.0).abs() <= 1e-8);
            // dense output between steps stays on the circle too
            assert!((x[(m, 0)] - samples[m].cos()).abs() <= 1e-8);
        }
    }

    #[test]
    fn blowup_is_reported_with_time() {
        // x' = x^2, x(0) = 1 blows up at t = 1
        let samples: Vec<f64> = (0..=20).map(|m| m as f64 * 0.1).collect();
        match integrate_on_grid(|_, x, dx| dx[0] = x[0] * x[0], 0.0, &[1.0], &samples, &IntegratorConfig::default()) {
            Err(Error::Blowup { t, .. }) => assert!(t > 0.99 && t < 1.0),
            Err(Error::StepSizeUnderflow { t }) | Err(Error::NonFiniteState { t }) => assert!(t > 0.99 && t <= 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn samples_after_initial_time() {
        let samples = [0.5, 1.0];
        let x = integrate_on_grid(|_, _, dx| dx[0] = 1.0, 0.0, &[0.0], &samples, &IntegratorConfig::default()).unwrap();
        assert!((x[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((x[(1, 0)] - 1.0).abs() < 1e-12);
        assert!(integrate_on_grid(|_, _, dx| dx[0] = 1.0, 1.0, &[0.0], &samples, &IntegratorConfig::default()).is_err());
    }
}
