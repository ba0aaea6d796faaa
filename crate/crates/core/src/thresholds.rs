//! Per-block resampling thresholds `a_n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{Role, StreamKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("threshold list is empty")]
    Empty,
    #[error("thresholds must be positive and finite, found {0}")]
    NotPositive(f64),
    #[error("invalid threshold interval ({lower}, {upper})")]
    InvalidInterval { lower: f64, upper: f64 },
}

/// Thresholds either listed explicitly or drawn uniformly on `(lower, upper)`.
///
/// A list shorter than the number of blocks repeats its last entry. Randomized
/// thresholds are a pure function of `(seed, n)`, so every run that reads block
/// `n` sees the same value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSchedule {
    Listed(Vec<f64>),
    Randomized { lower: f64, upper: f64, seed: u64 },
}

impl ThresholdSchedule {
    pub fn constant(a: f64) -> Result<Self, ThresholdError> {
        Self::listed(vec![a])
    }

    pub fn listed(values: Vec<f64>) -> Result<Self, ThresholdError> {
        if values.is_empty() {
            return Err(ThresholdError::Empty);
        }
        if let Some(bad) = values.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(ThresholdError::NotPositive(*bad));
        }
        Ok(Self::Listed(values))
    }

    pub fn randomized(lower: f64, upper: f64, seed: u64) -> Result<Self, ThresholdError> {
        if !(lower > 0.0 && lower < upper && upper.is_finite()) {
            return Err(ThresholdError::InvalidInterval { lower, upper });
        }
        Ok(Self::Randomized { lower, upper, seed })
    }

    /// Threshold `a_n` of block `n`.
    pub fn get(&self, n: usize) -> f64 {
        match self {
            Self::Listed(values) => values[n.min(values.len() - 1)],
            Self::Randomized { lower, upper, seed } => {
                let key = StreamKey::new(*seed, 0, n, 0, Role::Threshold);
                uniform_open(*lower, *upper, key)
            }
        }
    }

    /// `a_0, ..., a_{count-1}`.
    pub fn realize(&self, count: usize) -> Vec<f64> {
        (0..count).map(|n| self.get(n)).collect()
    }
}

/// Uniform on the open interval; resamples the measure-zero endpoint cases.
fn uniform_open(lower: f64, upper: f64, key: StreamKey) -> f64 {
    let mut draws = key.draws();
    loop {
        let a = lower + (upper - lower) * draws.next_uniform();
        if a > lower && a < upper {
            return a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listed_repeats_last() {
        let t = ThresholdSchedule::listed(vec![0.1, 0.2]).unwrap();
        assert_eq!(t.realize(4), vec![0.1, 0.2, 0.2, 0.2]);
    }

    #[test]
    fn rejects_bad_values() {
        assert_eq!(
            ThresholdSchedule::listed(vec![]).unwrap_err(),
            ThresholdError::Empty
        );
        assert!(ThresholdSchedule::constant(0.0).is_err());
        assert!(ThresholdSchedule::randomized(1.0, 1.0, 0).is_err());
        assert!(ThresholdSchedule::randomized(2.0, 1.0, 0).is_err());
    }

    #[test]
    fn randomized_is_pure_and_inside() {
        let t = ThresholdSchedule::randomized(1.0, 1.4, 9).unwrap();
        let a = t.realize(50);
        assert_eq!(a, t.realize(50));
        assert!(a.iter().all(|v| *v > 1.0 && *v < 1.4));
    }
}
