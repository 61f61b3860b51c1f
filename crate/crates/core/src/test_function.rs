//! Compactly supported piecewise-polynomial test functions
//! `phi(t) = C (t - a)^p (b - t)^q` on `(a, b)`, zero elsewhere.
//!
//! `C` is chosen so that the peak value is exactly one. Evaluation is done in
//! log space so that degrees in the hundreds do not overflow.

use serde::{Deserialize, Serialize};

use crate::bernoulli::{self, log2_abs_ratio};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    p: f64,
    q: f64,
    a: f64,
    b: f64,
}

impl TestFunction {
    pub fn new(p: f64, q: f64, a: f64, b: f64) -> Result<Self> {
        if !(p.is_finite() && q.is_finite() && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidTestFunction("non-finite parameter".into()));
        }
        if p < 1.0 || q < 1.0 {
            return Err(Error::InvalidTestFunction(format!(
                "degrees must be >= 1 (p = {p}, q = {q})"
            )));
        }
        if a >= b {
            return Err(Error::InvalidTestFunction(format!(
                "empty support [{a}, {b}]"
            )));
        }
        Ok(Self { p, q, a, b })
    }

    /// Symmetric function (p = q) on `[a, b]`.
    pub fn symmetric(p: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(p, p, a, b)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// Location of the unique maximum, `(p b + q a) / (p + q)`.
    pub fn peak(&self) -> f64 {
        (self.p * self.b + self.q * self.a) / (self.p + self.q)
    }

    /// Natural log of the normalization constant `C`.
    pub fn log_normalization(&self) -> f64 {
        let s = self.p + self.q;
        s * (s / self.width()).ln() - self.p * self.p.ln() - self.q * self.q.ln()
    }

    /// `C = (p+q)^(p+q) / (p^p q^q (b-a)^(p+q))`. Overflows to infinity for
    /// very large degrees; evaluation never goes through this value.
    pub fn normalization(&self) -> f64 {
        self.log_normalization().exp()
    }

    /// Same shape shifted by `shift` along the time axis.
    pub fn translated(&self, shift: f64) -> Self {
        Self {
            a: self.a + shift,
            b: self.b + shift,
            ..*self
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.a || t >= self.b {
            return 0.0;
        }
        let s = self.p + self.q;
        let w = self.width();
        let left = ((t - self.a) * s / (self.p * w)).ln();
        let right = ((self.b - t) * s / (self.q * w)).ln();
        (self.p * left + self.q * right).exp().clamp(0.0, 1.0)
    }

    /// `phi'(t) = phi(t) (p / (t - a) - q / (b - t))` inside the support.
    pub fn eval_deriv(&self, t: f64) -> f64 {
        if t <= self.a || t >= self.b {
            return 0.0;
        }
        self.eval(t) * (self.p / (t - self.a) - self.q / (self.b - t))
    }

    /// `max |phi'| / max |phi|` for symmetric functions.
    ///
    /// With `h = (b - a) / 2` the maximum of `|phi'|` sits at
    /// `|t - center| = h / sqrt(2p - 1)`, giving
    /// `(2p / sqrt(2p - 1)) (2 / (b - a)) ((2p - 2) / (2p - 1))^(p - 1)`.
    pub fn sup_ratio(&self) -> Result<f64> {
        if self.p != self.q {
            return Err(Error::AsymmetricTestFunction {
                p: self.p,
                q: self.q,
            });
        }
        let p = self.p;
        let base = (2.0 * p - 2.0) / (2.0 * p - 1.0);
        Ok(2.0 * p / (2.0 * p - 1.0).sqrt() * 2.0 / self.width() * base.powf(p - 1.0))
    }
}

/// Leading trapezoidal-rule error for the weak derivative identity
/// `-∫ phi' f = ∫ phi f'` with a symmetric degree-`p` test function:
/// `|2^p B_{p+1} / (p+1) * df * dt^(p+1)|`, where `df = f(b) - f(a)`.
///
/// The displayed term is the odd-`p` leading coefficient; for even `p`
/// `B_{p+1}` vanishes and so does the returned value.
pub fn trap_error_estimate(p: u32, dt: f64, df: f64) -> Result<f64> {
    if p < 1 {
        return Err(Error::InvalidArgument(format!("degree p = {p} < 1")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be > 0")));
    }
    let idx = p as usize + 1;
    let b = bernoulli::bernoulli(idx).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "B_{idx} is beyond the tabulated range ({})",
            bernoulli::MAX_INDEX
        ))
    })?;
    if df == 0.0 || num_traits::Zero::is_zero(&b) {
        return Ok(0.0);
    }
    let log2 = p as f64 + log2_abs_ratio(&b) - (idx as f64).log2()
        + idx as f64 * dt.log2()
        + df.abs().log2();
    Ok(log2.exp2())
}
