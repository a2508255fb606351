//! Physics side of the seisforge pipeline.
//!
//! - [`ground_motion`]: record import, synthetic band-limited motions, PGA scaling, resampling.
//! - [`structure`]: parametric RC building generation, lumped-mass reduction, modal periods.
//! - [`dynamics`]: Newmark-beta integration with Rayleigh damping and bilinear story springs.
//! - [`sysid`]: recovery of story stiffnesses from response histories.

pub mod dynamics;
pub mod error;
pub mod ground_motion;
pub mod kv;
pub mod rng;
pub mod structure;
pub mod sysid;

pub use error::{Error, Result};

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;
