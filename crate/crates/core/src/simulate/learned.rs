//! Integration of identified models `x' = Theta(x) w`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::library::TrialLibrary;
use crate::series::TimeSeries;
use crate::simulate::dopri5::{integrate_on_grid, IntegratorConfig};

/// Simulates the model with weights `w` (`J x D`) from `x0` at `t0` on the
/// given sample times.
pub fn simulate_learned(
    w: &DMatrix<f64>,
    library: &TrialLibrary,
    x0: &[f64],
    t0: f64,
    samples: &[f64],
    cfg: &IntegratorConfig,
) -> Result<TimeSeries> {
    let d = library.dim();
    if w.nrows() != library.len() || w.ncols() != d || x0.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "weights {}x{}, library {} terms in dimension {}, x0 of length {}",
            w.nrows(),
            w.ncols(),
            library.len(),
            d,
            x0.len()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    // only terms with a nonzero weight are evaluated
    let active: Vec<(usize, Vec<(usize, f64)>)> = (0..w.nrows())
        .filter_map(|j| {
            let coeffs: Vec<(usize, f64)> = (0..d).filter(|&k| w[(j, k)] != 0.0).map(|k| (k, w[(j, k)])).collect();
            (!coeffs.is_empty()).then_some((j, coeffs))
        })
        .collect();
    let terms = library.terms();
    let rhs = |_: f64, x: &[f64], dx: &mut [f64]| {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (j, coeffs) in &active {
            let f = terms[*j].eval(x);
            for &(k, c) in coeffs {
                dx[k] += c * f;
            }
        }
    };
    let x = integrate_on_grid(rhs, t0, x0, samples, cfg)?;
    TimeSeries::new(samples.to_vec(), x)
}

/// Sample times of `data` continued past its end so that the total span
/// grows by `factor` (1.5 extends by half).
pub fn extended_times(data: &TimeSeries, factor: f64) -> Vec<f64> {
    let span = data.end() - data.start();
    let extra = ((factor - 1.0).max(0.0) * span / data.dt()).round() as usize;
    let mut t = data.times().to_vec();
    let last = data.len() - 1;
    t.extend((1..=extra).map(|i| data.start() + (last + i) as f64 * data.dt()));
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::systems::SystemSpec;

    #[test]
    fn true_weights_match_native_integration() {
        let specs = [
            SystemSpec::duffing(1.0),
            SystemSpec::van_der_pol(1.0),
            SystemSpec::lotka_volterra(1.0),
            SystemSpec::lorenz([-8.0, 7.0, 27.0]),
        ];
        let cfg = IntegratorConfig::default();
        for spec in specs {
            let lib = TrialLibrary::polynomial(spec.dynamics.dim(), 5, true).unwrap();
            let w = spec.dynamics.true_weights(&lib).unwrap();
            let mut spec = spec;
            // chaos amplifies rounding differences; compare Lorenz on a short window
            if spec.dynamics.dim() == 3 {
                spec.t_end = 2.0;
            }
            let native = spec.integrate(&cfg).unwrap();
            let learned = simulate_learned(&w, &lib, &spec.x0, spec.t0, native.times(), &cfg).unwrap();
            let diff = (native.values() - learned.values()).abs().max();
            assert!(diff <= 1e-8, "{}: {diff}", spec.dynamics.name());
        }
    }

    #[test]
    fn zero_model_is_constant() {
        let lib = TrialLibrary::polynomial(2, 3, false).unwrap();
        let w = DMatrix::zeros(lib.len(), 2);
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let x = simulate_learned(&w, &lib, &[1.5, -2.0], 0.0, &t, &IntegratorConfig::default()).unwrap();
        for m in 0..50 {
            assert_eq!(x.row(m), vec![1.5, -2.0]);
        }
    }

    #[test]
    fn extension_by_half() {
        let data = SystemSpec::duffing(1.0).integrate(&IntegratorConfig::with_tol(1e-6)).unwrap();
        let t = extended_times(&data, 1.5);
        assert_eq!(t.len(), 4501);
        assert!((t[4500] - 45.0).abs() < 1e-9);
    }
}
