//! Feynman–Kac models: a Markov chain with transition kernels `M_k` and
//! potentials `G_k` in `(0, 1)`.
//!
//! Time indexing: `kernels[k]` moves the chain from time `k` to `k + 1` and
//! `potentials[k]` is evaluated at time `k + 1`. A potential is never evaluated
//! at time 0, so the weight of a stretch `(p, q]` is `G_{p+1}(x_{p+1}) ... G_q(x_q)`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Draws;

/// Tolerance on row sums of kernels and on the initial law.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model must have at least one state and one time step")]
    Empty,
    #[error("{what} has wrong dimension: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("kernel into time {time}, row {row} is not stochastic")]
    RowNotStochastic { time: usize, row: usize },
    #[error("potential at time {time}, state {state} is outside (0, 1)")]
    PotentialOutOfRange { time: usize, state: usize },
    #[error("initial law does not sum to 1 or has a negative entry")]
    InitialNotNormalized,
    #[error("state {state} out of range for a {num_states}-state model")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("path has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid weight window ({start}, {end}] for horizon {horizon}")]
    InvalidWindow {
        start: usize,
        end: usize,
        horizon: usize,
    },
    #[error("cannot read model file: {0}")]
    Io(String),
    #[error("cannot parse model file: {0}")]
    Parse(String),
}

/// Raw, unvalidated finite-state model as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteModel {
    pub num_states: usize,
    pub horizon: usize,
    pub initial: Vec<f64>,
    pub kernels: Vec<Vec<Vec<f64>>>,
    pub potentials: Vec<Vec<f64>>,
}

impl FiniteModel {
    /// Time-homogeneous convenience constructor.
    pub fn homogeneous(
        initial: Vec<f64>,
        kernel: Vec<Vec<f64>>,
        potential: Vec<f64>,
        horizon: usize,
    ) -> Self {
        Self {
            num_states: initial.len(),
            horizon,
            initial,
            kernels: vec![kernel; horizon],
            potentials: vec![potential; horizon],
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ValidatedModel, ModelError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&text)?.validate()
    }

    pub fn validate(self) -> Result<ValidatedModel, ModelError> {
        let k = self.num_states;
        let t = self.horizon;
        if k == 0 || t == 0 {
            return Err(ModelError::Empty);
        }
        check_len("initial", k, self.initial.len())?;
        check_len("kernels", t, self.kernels.len())?;
        check_len("potentials", t, self.potentials.len())?;

        let total: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|p| p.is_nan() || *p < 0.0)
            || (total - 1.0).abs() > STOCHASTIC_TOL
        {
            return Err(ModelError::InitialNotNormalized);
        }
        for (step, kernel) in self.kernels.iter().enumerate() {
            check_len(&format!("kernel into time {}", step + 1), k, kernel.len())?;
            for (row, entries) in kernel.iter().enumerate() {
                check_len(
                    &format!("kernel into time {} row {row}", step + 1),
                    k,
                    entries.len(),
                )?;
                let sum: f64 = entries.iter().sum();
                if entries.iter().any(|p| p.is_nan() || *p < 0.0)
                    || (sum - 1.0).abs() > STOCHASTIC_TOL
                {
                    return Err(ModelError::RowNotStochastic {
                        time: step + 1,
                        row,
                    });
                }
            }
        }
        for (step, g) in self.potentials.iter().enumerate() {
            check_len(&format!("potential at time {}", step + 1), k, g.len())?;
            if let Some(state) = g.iter().position(|v| !(*v > 0.0 && *v < 1.0)) {
                return Err(ModelError::PotentialOutOfRange {
                    time: step + 1,
                    state,
                });
            }
        }

        let q_prime = self
            .potentials
            .iter()
            .map(|g| {
                let max = g.iter().cloned().fold(f64::MIN, f64::max);
                let min = g.iter().cloned().fold(f64::MAX, f64::min);
                max / min
            })
            .collect();
        let log_potentials = self
            .potentials
            .iter()
            .map(|g| g.iter().map(|v| v.ln()).collect())
            .collect();
        let cumulative = self
            .kernels
            .iter()
            .map(|kernel| kernel.iter().map(|row| cumulative_sums(row)).collect())
            .collect();
        let initial_cumulative = cumulative_sums(&self.initial);
        Ok(ValidatedModel {
            raw: self,
            q_prime,
            log_potentials,
            cumulative,
            initial_cumulative,
        })
    }
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch {
            what: what.to_string(),
            expected,
            found,
        })
    }
}

fn cumulative_sums(row: &[f64]) -> Vec<f64> {
    row.iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Inverse-CDF lookup on right-open intervals `[c_{i-1}, c_i)`.
///
/// Draws that land beyond the last cumulative sum (rounding) go to the last
/// state with positive mass.
#[inline]
pub fn inverse_cdf(cumulative: &[f64], draw: f64) -> usize {
    match cumulative.iter().position(|c| draw < *c) {
        Some(i) => i,
        None => {
            let mut last = cumulative.len() - 1;
            while last > 0 && cumulative[last] == cumulative[last - 1] {
                last -= 1;
            }
            last
        }
    }
}

/// A finite model that passed validation. Immutable; freely shared across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedModel {
    raw: FiniteModel,
    q_prime: Vec<f64>,
    log_potentials: Vec<Vec<f64>>,
    cumulative: Vec<Vec<Vec<f64>>>,
    initial_cumulative: Vec<f64>,
}

impl ValidatedModel {
    pub fn num_states(&self) -> usize {
        self.raw.num_states
    }

    pub fn horizon(&self) -> usize {
        self.raw.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.raw.initial
    }

    /// Kernel `M_time`, moving the chain from `time - 1` to `time` (`1 <= time <= T`).
    pub fn kernel(&self, time: usize) -> &[Vec<f64>] {
        &self.raw.kernels[time - 1]
    }

    /// Potential `G_time` (`1 <= time <= T`).
    pub fn potential(&self, time: usize) -> &[f64] {
        &self.raw.potentials[time - 1]
    }

    pub fn log_potential_at(&self, time: usize, state: usize) -> f64 {
        self.log_potentials[time - 1][state]
    }

    /// `q'_time = max G_time / min G_time`, cached at validation.
    pub fn q_prime(&self, time: usize) -> f64 {
        self.q_prime[time - 1]
    }

    pub fn raw(&self) -> &FiniteModel {
        &self.raw
    }

    /// Next state under `M_time(state, .)` for a uniform `draw` in `[0, 1)`.
    pub fn sample_step(&self, time: usize, state: usize, draw: f64) -> usize {
        inverse_cdf(&self.cumulative[time - 1][state], draw)
    }

    pub fn sample_initial_state(&self, draw: f64) -> usize {
        inverse_cdf(&self.initial_cumulative, draw)
    }

    /// `W_{p,q}(x_{p+1:q}) = prod_{p<k<=q} G_k(x_k)`, accumulated in log space.
    pub fn path_weight(&self, window: PathWeightSpec, path: &[usize]) -> Result<f64, ModelError> {
        Ok(self.log_path_weight(window, path)?.exp())
    }

    pub fn log_path_weight(
        &self,
        window: PathWeightSpec,
        path: &[usize],
    ) -> Result<f64, ModelError> {
        let PathWeightSpec { start, end } = window;
        if start >= end || end > self.horizon() {
            return Err(ModelError::InvalidWindow {
                start,
                end,
                horizon: self.horizon(),
            });
        }
        if path.len() != end - start {
            return Err(ModelError::LengthMismatch {
                expected: end - start,
                found: path.len(),
            });
        }
        let mut log_w = 0.0;
        for (offset, &x) in path.iter().enumerate() {
            if x >= self.num_states() {
                return Err(ModelError::StateOutOfRange {
                    state: x,
                    num_states: self.num_states(),
                });
            }
            log_w += self.log_potential_at(start + 1 + offset, x);
        }
        Ok(log_w)
    }
}

/// The window `(start, end]` of a path weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathWeightSpec {
    pub start: usize,
    pub end: usize,
}

/// What the particle engine needs from a model.
///
/// `time` arguments are arrival times: `sample_step(t, x, ..)` draws
/// `X_t` given `X_{t-1} = x` and `log_potential(t, x)` is `log G_t(x)`,
/// which must be strictly negative.
pub trait FeynmanKac: Sync {
    type State: Clone + PartialEq + fmt::Debug + Send + Sync;

    fn horizon(&self) -> usize;

    fn sample_initial(&self, draws: &mut Draws) -> Self::State;

    fn sample_step(&self, time: usize, state: &Self::State, draws: &mut Draws) -> Self::State;

    fn log_potential(&self, time: usize, state: &Self::State) -> f64;

    /// Number of observables reported in per-time estimates.
    fn num_observables(&self) -> usize;

    /// Writes the observables of `state` into `out` (length `num_observables`).
    fn observe(&self, state: &Self::State, out: &mut [f64]);
}

impl FeynmanKac for ValidatedModel {
    type State = usize;

    fn horizon(&self) -> usize {
        self.raw.horizon
    }

    fn sample_initial(&self, draws: &mut Draws) -> usize {
        self.sample_initial_state(draws.next_uniform())
    }

    #[inline]
    fn sample_step(&self, time: usize, state: &usize, draws: &mut Draws) -> usize {
        ValidatedModel::sample_step(self, time, *state, draws.next_uniform())
    }

    #[inline]
    fn log_potential(&self, time: usize, state: &usize) -> f64 {
        self.log_potential_at(time, *state)
    }

    fn num_observables(&self) -> usize {
        self.num_states()
    }

    /// State indicators, so estimates are marginal laws.
    fn observe(&self, state: &usize, out: &mut [f64]) {
        out.fill(0.0);
        out[*state] = 1.0;
    }
}
