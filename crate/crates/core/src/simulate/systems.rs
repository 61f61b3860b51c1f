//! Benchmark dynamical systems and their sampling setups.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::TrialLibrary;
use crate::series::TimeSeries;
use crate::simulate::dopri5::{integrate_on_grid, IntegratorConfig};

/// Vector field of one of the benchmark systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum Dynamics {
    /// `x1' = x2`, `x2' = -mu x2 - alpha x1 - beta x1^3`
    Duffing { mu: f64, alpha: f64, beta: f64 },
    /// `x1' = x2`, `x2' = beta x2 (1 - x1^2) - x1`
    VanDerPol { beta: f64 },
    /// `x1' = alpha x1 - beta x1 x2`, `x2' = beta x1 x2 - 2 alpha x2`
    LotkaVolterra { alpha: f64, beta: f64 },
    /// `x1' = sigma (x2 - x1)`, `x2' = x1 (rho - x3) - x2`, `x3' = x1 x2 - beta x3`
    Lorenz { sigma: f64, beta: f64, rho: f64 },
}

// (coefficient, output dimension, exponents) triples of the polynomial field.
type Terms = Vec<(f64, usize, Vec<u32>)>;

impl Dynamics {
    pub fn name(&self) -> &'static str {
        match self {
            Dynamics::Duffing { .. } => "duffing",
            Dynamics::VanDerPol { .. } => "van_der_pol",
            Dynamics::LotkaVolterra { .. } => "lotka_volterra",
            Dynamics::Lorenz { .. } => "lorenz",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Dynamics::Lorenz { .. } => 3,
            _ => 2,
        }
    }

    pub fn rhs(&self, x: &[f64], dx: &mut [f64]) {
        match *self {
            Dynamics::Duffing { mu, alpha, beta } => {
                dx[0] = x[1];
                dx[1] = -mu * x[1] - alpha * x[0] - beta * x[0].powi(3);
            }
            Dynamics::VanDerPol { beta } => {
                dx[0] = x[1];
                dx[1] = beta * x[1] * (1.0 - x[0] * x[0]) - x[0];
            }
            Dynamics::LotkaVolterra { alpha, beta } => {
                dx[0] = alpha * x[0] - beta * x[0] * x[1];
                dx[1] = beta * x[0] * x[1] - 2.0 * alpha * x[1];
            }
            Dynamics::Lorenz { sigma, beta, rho } => {
                dx[0] = sigma * (x[1] - x[0]);
                dx[1] = x[0] * (rho - x[2]) - x[1];
                dx[2] = x[0] * x[1] - beta * x[2];
            }
        }
    }

    fn terms(&self) -> Terms {
        match *self {
            Dynamics::Duffing { mu, alpha, beta } => vec![
                (1.0, 0, vec![0, 1]),
                (-alpha, 1, vec![1, 0]),
                (-mu, 1, vec![0, 1]),
                (-beta, 1, vec![3, 0]),
            ],
            Dynamics::VanDerPol { beta } => vec![
                (1.0, 0, vec![0, 1]),
                (-1.0, 1, vec![1, 0]),
                (beta, 1, vec![0, 1]),
                (-beta, 1, vec![2, 1]),
            ],
            Dynamics::LotkaVolterra { alpha, beta } => vec![
                (alpha, 0, vec![1, 0]),
                (-beta, 0, vec![1, 1]),
                (beta, 1, vec![1, 1]),
                (-2.0 * alpha, 1, vec![0, 1]),
            ],
            Dynamics::Lorenz { sigma, beta, rho } => vec![
                (-sigma, 0, vec![1, 0, 0]),
                (sigma, 0, vec![0, 1, 0]),
                (rho, 1, vec![1, 0, 0]),
                (-1.0, 1, vec![0, 1, 0]),
                (-1.0, 1, vec![1, 0, 1]),
                (1.0, 2, vec![1, 1, 0]),
                (-beta, 2, vec![0, 0, 1]),
            ],
        }
    }

    /// Exact `J x D` weight matrix in the column order of `library`.
    pub fn true_weights(&self, library: &TrialLibrary) -> Result<DMatrix<f64>> {
        if library.dim() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "library dimension {} vs system dimension {}",
                library.dim(),
                self.dim()
            )));
        }
        let mut w = DMatrix::zeros(library.len(), self.dim());
        for (c, d, exps) in self.terms() {
            let j = library.monomial_index(&exps).ok_or_else(|| {
                Error::InvalidArgument(format!("library lacks the monomial with exponents {exps:?}"))
            })?;
            w[(j, d)] += c;
        }
        Ok(w)
    }
}

/// Dynamics, initial condition and sampling grid of one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub dynamics: Dynamics,
    pub x0: Vec<f64>,
    /// Time of the initial condition.
    pub t0: f64,
    /// First sample time, `>= t0`.
    pub first_sample: f64,
    pub t_end: f64,
    pub dt: f64,
}

pub const DUFFING_BETA: [f64; 4] = [0.005, 0.08, 1.0, 100.0];
pub const VAN_DER_POL_BETA: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
pub const LOTKA_VOLTERRA_BETA: [f64; 4] = [0.05, 0.1, 1.0, 10.0];

impl SystemSpec {
    pub fn duffing(beta: f64) -> Self {
        Self::two_d(Dynamics::Duffing { mu: 0.2, alpha: 0.05, beta }, vec![0.0, 2.0])
    }

    pub fn van_der_pol(beta: f64) -> Self {
        Self::two_d(Dynamics::VanDerPol { beta }, vec![0.0, 1.0])
    }

    pub fn lotka_volterra(beta: f64) -> Self {
        Self::two_d(Dynamics::LotkaVolterra { alpha: 1.0, beta }, vec![1.0, 2.0])
    }

    /// Chaotic Lorenz sampled at `0.001:0.001:10`; `x0` is not a sample.
    pub fn lorenz(x0: [f64; 3]) -> Self {
        Self {
            dynamics: Dynamics::Lorenz {
                sigma: 10.0,
                beta: 8.0 / 3.0,
                rho: 28.0,
            },
            x0: x0.to_vec(),
            t0: 0.0,
            first_sample: 0.001,
            t_end: 10.0,
            dt: 0.001,
        }
    }

    fn two_d(dynamics: Dynamics, x0: Vec<f64>) -> Self {
        Self {
            dynamics,
            x0,
            t0: 0.0,
            first_sample: 0.0,
            t_end: 30.0,
            dt: 0.01,
        }
    }

    /// Named variant `1..=4` of a two-dimensional benchmark.
    pub fn variant(system: &str, variant: usize) -> Result<Self> {
        if !(1..=4).contains(&variant) {
            return Err(Error::InvalidArgument(format!("variant {variant} not in 1..=4")));
        }
        let i = variant - 1;
        match system {
            "duffing" => Ok(Self::duffing(DUFFING_BETA[i])),
            "van_der_pol" => Ok(Self::van_der_pol(VAN_DER_POL_BETA[i])),
            "lotka_volterra" => Ok(Self::lotka_volterra(LOTKA_VOLTERRA_BETA[i])),
            other => Err(Error::InvalidArgument(format!("no variants for system {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x0.len() != self.dynamics.dim() {
            return Err(Error::ShapeMismatch(format!(
                "initial condition has {} entries, system needs {}",
                self.x0.len(),
                self.dynamics.dim()
            )));
        }
        if !(self.dt > 0.0) || !(self.t_end > self.first_sample) || self.first_sample < self.t0 {
            return Err(Error::InvalidArgument(format!(
                "bad time grid: t0 {}, first sample {}, end {}, dt {}",
                self.t0, self.first_sample, self.t_end, self.dt
            )));
        }
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        sample_grid(self.first_sample, self.t_end, self.dt)
    }

    pub fn integrate(&self, cfg: &IntegratorConfig) -> Result<TimeSeries> {
        self.validate()?;
        let times = self.sample_times();
        let dyns = &self.dynamics;
        let x = integrate_on_grid(|_, x, dx| dyns.rhs(x, dx), self.t0, &self.x0, &times, cfg)?;
        TimeSeries::new(times, x)
    }
}

/// `first, first + dt, ...` up to `end` inclusive (within rounding).
pub fn sample_grid(first: f64, end: f64, dt: f64) -> Vec<f64> {
    let m = ((end - first) / dt + 1e-9).floor() as usize + 1;
    (0..m).map(|i| first + i as f64 * dt).collect()
}

/// `n` Lorenz initial conditions uniform on `[-15, 15]^2 x [10, 40]`.
pub fn lorenz_initial_conditions(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            [
                rng.random_range(-15.0..=15.0),
                rng.random_range(-15.0..=15.0),
                rng.random_range(10.0..=40.0),
            ]
        })
        .collect()
}

/// Labelled noise-free benchmark configurations: variants 1-4 of the three
/// planar systems, then `lorenz_count` Lorenz runs with random initial states.
pub fn benchmark_suite(lorenz_count: usize, seed: u64) -> Vec<(String, SystemSpec)> {
    let mut out = Vec::new();
    for system in ["duffing", "van_der_pol", "lotka_volterra"] {
        for v in 1..=4 {
            out.push((format!("{system}/V{v}"), SystemSpec::variant(system, v).expect("known system")));
        }
    }
    for (i, x0) in lorenz_initial_conditions(lorenz_count, seed).into_iter().enumerate() {
        out.push((format!("lorenz/{}", i + 1), SystemSpec::lorenz(x0)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Fixed-step classical RK4, independent of the adaptive integrator.
    fn rk4(dyn_: &Dynamics, x0: &[f64], h: f64, steps: usize, mut visit: impl FnMut(usize, &[f64])) {
        let n = x0.len();
        let mut x = x0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for s in 1..=steps {
            dyn_.rhs(&x, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            dyn_.rhs(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            dyn_.rhs(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            dyn_.rhs(&tmp, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            visit(s, &x);
        }
    }

    #[test]
    fn table_values() {
        let d = SystemSpec::variant("duffing", 3).unwrap();
        assert_eq!(d.dynamics, Dynamics::Duffing { mu: 0.2, alpha: 0.05, beta: 1.0 });
        assert_eq!(d.x0, vec![0.0, 2.0]);
        assert_eq!(d.sample_times().len(), 3001);
        let lv = SystemSpec::variant("lotka_volterra", 4).unwrap();
        let lib = TrialLibrary::polynomial(2, 5, true).unwrap();
        let w = lv.dynamics.true_weights(&lib).unwrap();
        assert_eq!(w[(lib.monomial_index(&[0, 1]).unwrap(), 1)], -2.0);
        assert_eq!(w[(lib.monomial_index(&[1, 1]).unwrap(), 0)], -10.0);
        assert_eq!(SystemSpec::lorenz([1.0, 1.0, 1.0]).sample_times().len(), 10_000);
        assert!(SystemSpec::variant("lorenz", 1).is_err());
    }

    #[test]
    fn lorenz_initial_conditions_in_box() {
        let ics = lorenz_initial_conditions(500, 7);
        assert_eq!(ics, lorenz_initial_conditions(500, 7));
        for x in ics {
            assert!(x[0].abs() <= 15.0 && x[1].abs() <= 15.0 && (10.0..=40.0).contains(&x[2]));
        }
        assert_eq!(benchmark_suite(5, 1).len(), 17);
    }

    #[test]
    fn true_weights_reproduce_the_vector_field() {
        let lib3 = TrialLibrary::polynomial(3, 5, true).unwrap();
        let lib2 = TrialLibrary::polynomial(2, 5, true).unwrap();
        let systems = [
            (Dynamics::Duffing { mu: 0.2, alpha: 0.05, beta: 1.0 }, &lib2),
            (Dynamics::VanDerPol { beta: 4.0 }, &lib2),
            (Dynamics::LotkaVolterra { alpha: 1.0, beta: 10.0 }, &lib2),
            (Dynamics::Lorenz { sigma: 10.0, beta: 8.0 / 3.0, rho: 28.0 }, &lib3),
        ];
        for (dynamics, lib) in systems {
            let w = dynamics.true_weights(lib).unwrap();
            let x: Vec<f64> = (0..dynamics.dim()).map(|d| 0.3 + 0.7 * d as f64).collect();
            let row = lib.eval_row(&x);
            let mut dx = vec![0.0; dynamics.dim()];
            dynamics.rhs(&x, &mut dx);
            for d in 0..dynamics.dim() {
                let via_w: f64 = row.iter().enumerate().map(|(j, f)| f * w[(j, d)]).sum();
                assert!((via_w - dx[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lorenz_stays_bounded() {
        let spec = SystemSpec::lorenz([-8.0, 7.0, 27.0]);
        let x = spec.integrate(&IntegratorConfig::default()).unwrap();
        let max3 = x.values().column(2).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((30.0..=60.0).contains(&max3), "{max3}");

        let mut rk_max = 0.0f64;
        rk4(&spec.dynamics, &spec.x0, 1e-4, 100_000, |_, x| rk_max = rk_max.max(x[2].abs()));
        assert!((30.0..=60.0).contains(&rk_max));
        // chaos limits agreement to early times
        let mut at_one = vec![];
        rk4(&spec.dynamics, &spec.x0, 1e-4, 10_000, |s, x| {
            if s == 10_000 {
                at_one = x.to_vec();
            }
        });
        for d in 0..3 {
            assert!((x.values()[(999, d)] - at_one[d]).abs() < 1e-6);
        }
    }

    #[test]
    fn tighter_tolerance_is_closer_to_reference() {
        let spec = SystemSpec::duffing(1.0);
        let mut reference = vec![];
        rk4(&spec.dynamics, &spec.x0, 1e-4, 300_000, |s, x| {
            if s == 300_000 {
                reference = x.to_vec();
            }
        });
        let err = |tol: f64| {
            let x = spec.integrate(&IntegratorConfig::with_tol(tol)).unwrap();
            (0..2).map(|d| (x.values()[(3000, d)] - reference[d]).abs()).fold(0.0, f64::max)
        };
        let mut prev = err(1e-4);
        for tol in [5e-5, 2.5e-5, 1.25e-5, 1e-6, 1e-8] {
            let e = err(tol);
            assert!(e <= 10.0 * prev, "tol {tol}: {e} vs {prev}");
            prev = e;
        }
        assert!(prev < 1e-7);
    }
}
