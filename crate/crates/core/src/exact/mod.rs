//! Exact finite-state oracle.
//!
//! Everything here is a deterministic function of a [`ValidatedModel`]: flows
//! are propagated by matrix recursion over the `K` states, and only the CLT
//! variance falls back to (capped) enumeration of within-block paths.
//!
//! Block conventions shared by the whole module, for a schedule
//! `0 = t_0 < t_1 < ... < t_m`:
//!
//! * block `p >= 1` is the excursion over base times `(t_{p-1}, t_p]`, and its
//!   potential is the product of `G_k` along it; block 0 is the initial state
//!   with potential 1;
//! * the predicted measure `eta_p` is the law at `t_p` weighted through
//!   `t_{p-1}`, the updated measure `eta_hat_p` is weighted through `t_p`.

mod clt;
mod constants;
mod criteria;
mod marginals;
mod operators;
mod schedule;

pub use clt::{clt_variance, clt_variance_terms, local_field_variance, CltTerms};
pub use constants::{constants, ConstantsReport, MixingReport};
pub use criteria::{criterion_curve, limiting_cv2, limiting_entropy, CriterionKind};
pub use marginals::{fk_marginals, Marginals};
pub use operators::{block_moments_enumerated, block_operators, BlockMoments, BlockOperators};
pub use schedule::{deterministic_times, epsilon_m, BlockSchedule, ScheduleKind};

use thiserror::Error;

/// Default cap on the number of paths enumerated per block.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("expected block weight vanished at block start {start}, time {s}")]
    DegenerateExpectation { start: usize, s: usize },
    #[error("criterion equals its threshold exactly in block {block} at time {s}")]
    DegenerateThreshold { block: usize, s: usize },
    #[error("block {block} needs {required} enumerated paths, cap is {cap}")]
    EnumerationCapExceeded {
        block: usize,
        required: u128,
        cap: u64,
    },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Row vector times matrix.
pub(crate) fn vec_mat(v: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; m[0].len()];
    for (vi, row) in v.iter().zip(m) {
        if *vi != 0.0 {
            for (o, r) in out.iter_mut().zip(row) {
                *o += vi * r;
            }
        }
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn normalized(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}
