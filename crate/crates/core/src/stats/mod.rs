//! Closed-form bounds and the Monte Carlo suites that check them.

mod bounds;
mod experiments;
mod khinchine;
mod summary;

pub use bounds::{
    alpha, bound_fk743, bound_improved, bound_main, bound_main_capped, uniform_quantile,
};
pub use experiments::{
    bias_and_lm_experiment, clt_experiment, lm_error_bound, local_field_experiment,
    local_field_samples, oscillation, tail_experiment, BiasReport, CltReport, Experiment,
    ExperimentError, LmRow, LocalFieldReport, TailReport, TailRow,
};
pub use khinchine::khinchine_b;
pub use summary::{
    linear_fit, lm_norm, moments, wilson, LmNorm, Moments, Proportion, Z_ONE_SIDED_99,
    Z_TWO_SIDED_99,
};
