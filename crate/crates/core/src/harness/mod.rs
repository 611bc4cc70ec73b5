//! Instances, tolerance sweeps and self-checks behind the `psarp` binary.

pub mod checks;
pub mod instance;
pub mod sweep;

pub use instance::{Instance, Overrides, Reference};
pub use sweep::{run_sweep, SweepPoint, SweepReport};
