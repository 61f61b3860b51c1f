//! Ground-truth trajectories, noise, and simulation of identified models.

pub mod dopri5;
pub mod learned;
pub mod noise;
pub mod systems;

pub use dopri5::{integrate_on_grid, IntegratorConfig};
pub use learned::{extended_times, simulate_learned};
pub use noise::{add_noise, realization_rng, rms_norm, NoiseSpec};
pub use systems::{benchmark_suite, lorenz_initial_conditions, Dynamics, SystemSpec};
