//! Calibrated additive white noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise standard deviation relative to the RMS of the clean signal.
    pub sigma_snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_snr >= 0.0 && self.sigma_snr.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma_snr = {} must be >= 0", self.sigma_snr)));
        }
        Ok(())
    }
}

/// `sqrt(mean of x^2)` over all samples and coordinates.
pub fn rms_norm(x: &TimeSeries) -> f64 {
    let v = x.values();
    (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt()
}

/// Generator for one realization: `seed` selects the experiment, `stream`
/// the realization within it.
pub fn realization_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `y = x + eps`, `eps ~ N(0, (sigma_snr * rms(x))^2)` i.i.d.
pub fn add_noise(x: &TimeSeries, noise: &NoiseSpec, stream: u64) -> Result<TimeSeries> {
    noise.validate()?;
    if noise.sigma_snr == 0.0 {
        return Ok(x.clone());
    }
    let sigma = noise.sigma_snr * rms_norm(x);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = realization_rng(noise.seed, stream);
    let mut y = x.values().clone();
    for v in y.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    x.with_values(y)
}
