//! Adaptive and fixed-schedule runs on shared randomness.
//!
//! Both runs read every uniform from the same keyed stream, so they are the same
//! run until their resampling decisions differ. The coupled runner therefore
//! evolves one particle system and clones it at the first time the two triggers
//! disagree; after that each copy follows its own trigger.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{BlockSchedule, CriterionKind};
use crate::model::FeynmanKac;
use crate::smc::{RunConfig, RunRecord, Runner, SmcError, Trigger};
use crate::stats::{linear_fit, wilson};
use crate::thresholds::{ThresholdError, ThresholdSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error(transparent)]
    Smc(#[from] SmcError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

/// `m + 1` thresholds drawn uniformly on `(lower, upper)` from the threshold keys
/// of `seed`.
pub fn sample_thresholds(
    seed: u64,
    lower: f64,
    upper: f64,
    m: usize,
) -> Result<Vec<f64>, ThresholdError> {
    Ok(ThresholdSchedule::randomized(lower, upper, seed)?.realize(m + 1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledRun<S> {
    pub shared_seed: u64,
    pub adaptive_times: Vec<usize>,
    pub reference_times: Vec<usize>,
    /// First `n <= m` with `t_n^N != t_n`, a missing time counting as different.
    pub first_divergence: Option<usize>,
    /// Time of the first step at which the two triggers disagreed.
    pub fork_time: Option<usize>,
    pub adaptive: RunRecord<S>,
    pub reference: RunRecord<S>,
}

/// First `n` in `1..=m` where the two resampling-time sequences differ.
pub fn first_divergence(adaptive: &[usize], reference: &[usize], m: usize) -> Option<usize> {
    (1..=m).find(|&n| adaptive.get(n) != reference.get(n))
}

/// Runs the adaptive trigger and the fixed `schedule` as one shared evolution,
/// forked lazily at the first disagreement.
pub fn run_coupled<M: FeynmanKac>(
    model: &M,
    kind: CriterionKind,
    thresholds: &ThresholdSchedule,
    schedule: &BlockSchedule,
    config: RunConfig,
    m: usize,
) -> Result<CoupledRun<M::State>, SmcError> {
    let adaptive_trigger = Trigger::Adaptive {
        kind,
        thresholds: thresholds.clone(),
    };
    let reference_trigger = Trigger::fixed(&schedule.times, model.horizon())?;
    let seed = config.seed;
    let mut shared = Runner::new(model, config)?;
    let mut fork_time = None;
    let (adaptive, mut reference) = loop {
        if shared.finished() {
            let reference = shared.clone().finish(&reference_trigger);
            let adaptive = shared.finish(&adaptive_trigger);
            break (adaptive, reference);
        }
        let summary = shared.advance()?;
        let n = shared.block_index();
        let s = shared.time();
        let a = adaptive_trigger.fires(n, s, &summary);
        let r = reference_trigger.fires(n, s, &summary);
        if a == r {
            if a {
                shared.resample(&summary, adaptive_trigger.threshold(n))?;
            }
            continue;
        }
        fork_time = Some(s);
        let mut reference = shared.clone();
        let mut adaptive = shared;
        if a {
            adaptive.resample(&summary, adaptive_trigger.threshold(n))?;
        } else {
            reference.resample(&summary, None)?;
        }
        break (
            adaptive.run_to_end(&adaptive_trigger)?,
            reference.run_to_end(&reference_trigger)?,
        );
    };
    // Blocks closed before the fork carry the adaptive thresholds as labels.
    for block in &mut reference.blocks {
        block.threshold = reference_trigger.threshold(block.index);
    }
    Ok(CoupledRun {
        shared_seed: seed,
        first_divergence: first_divergence(
            &adaptive.resampling_times,
            &reference.resampling_times,
            m,
        ),
        adaptive_times: adaptive.resampling_times.clone(),
        reference_times: reference.resampling_times.clone(),
        fork_time,
        adaptive,
        reference,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub particles: usize,
    pub failures: u64,
    pub replicates: u64,
    pub freq: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    /// Slope of `log(freq)` against `N`, over points with failures.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub points_used: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub fit: SweepFit,
    /// Each frequency stays within the interval of every smaller `N`'s upper limit.
    pub non_increasing: bool,
    /// Whether the outputs of every coupled, non-diverged run matched exactly.
    pub transfer_exact: bool,
}

impl SweepReport {
    pub fn evaluate(points: Vec<SweepPoint>, transfer_exact: bool) -> Self {
        let used: Vec<&SweepPoint> = points.iter().filter(|p| p.failures > 0).collect();
        let fit = linear_fit(
            &used
                .iter()
                .map(|p| (p.particles as f64, p.freq.ln()))
                .collect::<Vec<_>>(),
        );
        let non_increasing = points.windows(2).all(|w| w[1].wilson_lo <= w[0].wilson_hi);
        Self {
            fit: SweepFit {
                slope: fit.map(|f| f.0),
                intercept: fit.map(|f| f.1),
                points_used: used.iter().map(|p| p.particles).collect(),
            },
            points,
            non_increasing,
            transfer_exact,
        }
    }
}

/// Coupling-failure frequencies over `replicates` seeds for each `N`.
///
/// Replicate `r` uses RNG replicate index `r` under `seed`.
#[allow(clippy::too_many_arguments)]
pub fn failure_sweep<M: FeynmanKac>(
    model: &M,
    kind: CriterionKind,
    thresholds: &ThresholdSchedule,
    schedule: &BlockSchedule,
    m: usize,
    particle_counts: &[usize],
    replicates: usize,
    seed: u64,
    base: &RunConfig,
) -> Result<SweepReport, CouplingError> {
    if particle_counts.is_empty() || particle_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CouplingError::InvalidSweep(
            "particle counts must be non-empty and increasing".into(),
        ));
    }
    if replicates == 0 {
        return Err(CouplingError::InvalidSweep("need replicates".into()));
    }
    let mut points = Vec::with_capacity(particle_counts.len());
    let mut transfer_exact = true;
    for &particles in particle_counts {
        let outcomes: Vec<(bool, bool)> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut config = base.clone();
                config.particles = particles;
                config.seed = seed;
                config.replicate = r as u32;
                let run = run_coupled(model, kind, thresholds, schedule, config.clone(), m)?;
                let failed = run.first_divergence.is_some();
                // The transfer check compares against a reference run made from scratch,
                // not against the forked copy.
                let exact = failed || {
                    let alone = crate::smc::run_reference(model, &schedule.times, config)?;
                    same_outputs(&run.adaptive, &alone, &run.reference_times, m)
                };
                Ok((failed, exact))
            })
            .collect::<Result<_, SmcError>>()?;
        let failures = outcomes.iter().filter(|o| o.0).count() as u64;
        transfer_exact &= outcomes.iter().all(|o| o.1);
        let p = wilson(failures, replicates as u64);
        points.push(SweepPoint {
            particles,
            failures,
            replicates: replicates as u64,
            freq: p.freq,
            wilson_lo: p.lower,
            wilson_hi: p.upper,
        });
    }
    Ok(SweepReport::evaluate(points, transfer_exact))
}

/// Whether two records agree bit for bit on every estimate up to the `m`-th
/// reference resampling time (the horizon if there are fewer).
pub fn same_outputs<S: PartialEq>(
    a: &RunRecord<S>,
    b: &RunRecord<S>,
    reference_times: &[usize],
    m: usize,
) -> bool {
    let until = reference_times.get(m).copied().unwrap_or(a.horizon);
    let times = |r: &RunRecord<S>| -> Vec<usize> {
        r.resampling_times
            .iter()
            .copied()
            .filter(|t| *t <= until)
            .collect()
    };
    a.estimates[..=until] == b.estimates[..=until] && times(a) == times(b)
}
