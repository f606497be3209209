//! Optimization strategies for microgrid energy management.
//!
//! The crate bundles five independent planners that share a common
//! time-series layer and battery cost model:
//!
//! * [`dp`] — receding-horizon dynamic programming for a grid-connected
//!   battery, pricing degradation per half cycle.
//! * [`adp`] — approximate dynamic programming for a wind-farm battery whose
//!   degradation follows an Ah-throughput lifetime model.
//! * [`tcl`] — joint scheduling of a diesel generator and a battery against
//!   an aggregate population of thermostatically controlled loads.
//! * [`smoothing`] — two-stage wind-power smoothing: a setpoint quadratic
//!   program followed by a ramp-constrained battery dispatch.
//! * [`network`] — value-function learning for several cooperating
//!   microgrids trading through a central system.
//!
//! Everything is deterministic for a fixed seed: random draws flow through
//! [`rng::Rng64`] and no collection with unstable iteration order touches an
//! output path.

pub mod adp;
pub mod battery;
pub mod dp;
pub mod error;
pub mod network;
pub mod rng;
pub mod series;
pub mod smoothing;
pub mod tcl;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
