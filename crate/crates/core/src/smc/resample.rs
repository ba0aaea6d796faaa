use serde::{Deserialize, Serialize};

use crate::rng::{Role, StreamKey};
use crate::smc::SmcError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampler {
    /// Keep particle `i` with probability `W_i`, else draw from `W_j / sum W`.
    #[default]
    Select,
    /// `N` independent draws from `W_j / sum W`.
    Multinomial,
}

/// Cumulative weights `exp(l_j - max)`, summed left to right.
fn cumulative_weights(log_w: &[f64]) -> Result<Vec<f64>, SmcError> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(SmcError::AllWeightsUnderflow);
    }
    let cum: Vec<f64> = log_w
        .iter()
        .scan(0.0, |acc, l| {
            *acc += (l - max).exp();
            Some(*acc)
        })
        .collect();
    if cum.last().is_none_or(|c| c.is_nan() || *c <= 0.0) {
        return Err(SmcError::AllWeightsUnderflow);
    }
    Ok(cum)
}

/// Index `j` with `cum[j-1] <= u * total < cum[j]`, skipping zero-weight tails.
pub fn categorical_index(cum: &[f64], u: f64) -> usize {
    let total = *cum.last().unwrap();
    let target = u * total;
    let j = cum.partition_point(|c| *c <= target);
    if j < cum.len() {
        return j;
    }
    let mut last = cum.len() - 1;
    while last > 0 && cum[last] == cum[last - 1] {
        last -= 1;
    }
    last
}

/// Multinomial ancestors; particle `i` reads the selection key `(time, i)`.
pub fn resample_multinomial(
    log_w: &[f64],
    seed: u64,
    replicate: u32,
    time: usize,
) -> Result<Vec<usize>, SmcError> {
    let cum = cumulative_weights(log_w)?;
    Ok((0..log_w.len())
        .map(|i| {
            let u = StreamKey::new(seed, replicate, time, i, Role::Selection).uniform();
            categorical_index(&cum, u)
        })
        .collect())
}

/// Selection-kernel ancestors. Particle `i` is kept when its keep draw falls
/// below `W_i`; otherwise its selection draw picks a Boltzmann–Gibbs ancestor.
pub fn resample_selection(
    log_w: &[f64],
    seed: u64,
    replicate: u32,
    time: usize,
) -> Result<Vec<usize>, SmcError> {
    if let Some((index, l)) = log_w
        .iter()
        .enumerate()
        .find(|(_, l)| l.is_nan() || **l > 0.0)
    {
        return Err(SmcError::WeightNotInUnitInterval {
            index,
            weight: l.exp(),
        });
    }
    let cum = cumulative_weights(log_w)?;
    Ok(log_w
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let keep = StreamKey::new(seed, replicate, time, i, Role::Keep).uniform();
            if keep < l.exp() {
                i
            } else {
                let u = StreamKey::new(seed, replicate, time, i, Role::Selection).uniform();
                categorical_index(&cum, u)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_right_open() {
        let cum = [0.25, 0.5, 0.5, 1.0];
        assert_eq!(categorical_index(&cum, 0.0), 0);
        assert_eq!(categorical_index(&cum, 0.25), 1);
        assert_eq!(categorical_index(&cum, 0.5), 3);
        assert_eq!(categorical_index(&[1.0, 1.0], 1.0), 0);
    }

    #[test]
    fn single_heavy_particle_takes_everything() {
        let lw = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
        let a = resample_multinomial(&lw, 3, 0, 1).unwrap();
        assert!(a.iter().all(|j| *j == 1));
    }

    #[test]
    fn unit_weights_keep_everyone() {
        let lw = [0.0; 32];
        let a = resample_selection(&lw, 5, 2, 4).unwrap();
        assert_eq!(a, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn errors() {
        assert_eq!(
            resample_multinomial(&[f64::NEG_INFINITY; 3], 0, 0, 1).unwrap_err(),
            SmcError::AllWeightsUnderflow
        );
        assert!(matches!(
            resample_selection(&[-0.1, 0.2], 0, 0, 1).unwrap_err(),
            SmcError::WeightNotInUnitInterval { index: 1, .. }
        ));
    }
}
