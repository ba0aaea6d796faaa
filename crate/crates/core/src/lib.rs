//! Adaptive-resampling sequential Monte Carlo for Feynman–Kac models.
//!
//! * [`model`] holds the finite-state models and the generic [`model::FeynmanKac`] trait.
//! * [`exact`] is the finite-state oracle: flows, limiting criteria, deterministic
//!   resampling times, semigroup constants and CLT variances.
//! * [`smc`] is the particle engine, in adaptive and fixed-schedule modes.
//! * [`coupling`] runs both modes on shared randomness and measures when they part.
//! * [`stats`] has the closed-form bounds and the Monte Carlo verification suites.
//! * [`cli`] is the command-line front end.

pub mod cli;
pub mod coupling;
pub mod exact;
pub mod model;
pub mod rng;
pub mod smc;
pub mod stats;
pub mod thresholds;
