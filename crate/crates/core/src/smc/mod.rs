//! The particle engine.
//!
//! A run alternates mutation steps with criterion checks. Whenever the trigger
//! fires, the current block is closed and the particles are resampled, either
//! through the selection kernel (keep particle `i` with probability `W_i`, else
//! replace it by a Boltzmann–Gibbs draw) or by plain multinomial resampling.
//!
//! Every uniform is addressed by `(seed, replicate, time, particle, role)`, so a
//! run is a pure function of its inputs and two runs that make the same
//! decisions consume the same draws.

mod criterion;
mod resample;
mod run;

pub use criterion::{summarize_weights, WeightSummary};
pub use resample::{categorical_index, resample_multinomial, resample_selection, Resampler};
pub use run::{
    run, run_adaptive, run_reference, BlockSummary, ParticleSystem, RunConfig, RunRecord, Runner,
    Snapshot, TimeEstimate, Trigger,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmcError {
    #[error("the run needs at least one particle")]
    NoParticles,
    #[error("cannot mutate past the horizon {0}")]
    HorizonExhausted(usize),
    #[error("criterion evaluated at the start of a block")]
    EmptyBlock,
    #[error("all particle weights underflowed")]
    AllWeightsUnderflow,
    #[error("block weight {weight} of particle {index} is outside (0, 1]")]
    WeightNotInUnitInterval { index: usize, weight: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}
