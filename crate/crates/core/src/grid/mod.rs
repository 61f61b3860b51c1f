//! Test-function placement strategies.

pub mod adaptive;
pub mod uniform;
