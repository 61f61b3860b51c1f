mod bernoulli;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod library;
pub mod metrics;
pub mod pipeline;
pub mod series;
pub mod simulate;
pub mod solver;
pub mod test_function;
pub mod weak_system;
