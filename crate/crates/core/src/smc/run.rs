use serde::{Deserialize, Serialize};

use crate::exact::CriterionKind;
use crate::model::FeynmanKac;
use crate::rng::{Role, StreamKey};
use crate::smc::{
    resample_multinomial, resample_selection, summarize_weights, Resampler, SmcError, WeightSummary,
};
use crate::thresholds::ThresholdSchedule;

/// Per-run settings that do not describe the model or the trigger.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub particles: usize,
    pub seed: u64,
    pub replicate: u32,
    pub resampler: Resampler,
    /// Keep the particle states and weights seen at every resampling time.
    pub record_snapshots: bool,
    /// Keep the ancestor indices chosen at every resampling time.
    pub record_ancestry: bool,
}

impl RunConfig {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            seed,
            replicate: 0,
            resampler: Resampler::Select,
            record_snapshots: false,
            record_ancestry: false,
        }
    }

    pub fn replicate(mut self, replicate: u32) -> Self {
        self.replicate = replicate;
        self
    }

    pub fn resampler(mut self, resampler: Resampler) -> Self {
        self.resampler = resampler;
        self
    }

    pub fn snapshots(mut self) -> Self {
        self.record_snapshots = true;
        self
    }

    pub fn ancestry(mut self) -> Self {
        self.record_ancestry = true;
        self
    }
}

/// When a run resamples.
#[derive(Clone, Debug, PartialEq)]
pub enum Trigger {
    /// At the first time of each block where the empirical criterion reaches `a_n`.
    Adaptive {
        kind: CriterionKind,
        thresholds: ThresholdSchedule,
    },
    /// At the listed times (the leading 0 is optional).
    Fixed(Vec<usize>),
}

impl Trigger {
    pub fn fixed(times: &[usize], horizon: usize) -> Result<Self, SmcError> {
        let inner: Vec<usize> = times.iter().copied().filter(|t| *t > 0).collect();
        if inner.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SmcError::InvalidSchedule(
                "times must be strictly increasing".into(),
            ));
        }
        if inner.last().is_some_and(|t| *t > horizon) {
            return Err(SmcError::InvalidSchedule(format!(
                "time beyond horizon {horizon}"
            )));
        }
        Ok(Self::Fixed(inner))
    }

    /// Threshold of block `n`, if the trigger has one.
    pub fn threshold(&self, n: usize) -> Option<f64> {
        match self {
            Self::Adaptive { thresholds, .. } => Some(thresholds.get(n)),
            Self::Fixed(_) => None,
        }
    }

    /// Whether block `n`, observed at time `s` with criteria `summary`, ends now.
    pub fn fires(&self, n: usize, s: usize, summary: &WeightSummary) -> bool {
        match self {
            Self::Adaptive { kind, thresholds } => summary.value(*kind) >= thresholds.get(n),
            Self::Fixed(times) => times.binary_search(&s).is_ok(),
        }
    }
}

/// `N` particles with their block log-weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem<S> {
    pub states: Vec<S>,
    pub block_log_weights: Vec<f64>,
    pub time: usize,
    pub block_index: usize,
    pub block_start: usize,
    pub resampling_times: Vec<usize>,
}

impl<S: Clone> ParticleSystem<S> {
    /// `N` i.i.d. draws from the initial law, particle `i` reading key `(0, i, init)`.
    pub fn initialize<M: FeynmanKac<State = S>>(
        model: &M,
        particles: usize,
        seed: u64,
        replicate: u32,
    ) -> Result<Self, SmcError> {
        if particles == 0 {
            return Err(SmcError::NoParticles);
        }
        let states = (0..particles)
            .map(|i| {
                model.sample_initial(&mut StreamKey::new(seed, replicate, 0, i, Role::Init).draws())
            })
            .collect();
        Ok(Self {
            states,
            block_log_weights: vec![0.0; particles],
            time: 0,
            block_index: 0,
            block_start: 0,
            resampling_times: vec![0],
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Moves every particle one base step and multiplies in the new potential.
    pub fn mutate<M: FeynmanKac<State = S>>(
        &mut self,
        model: &M,
        seed: u64,
        replicate: u32,
    ) -> Result<(), SmcError> {
        if self.time >= model.horizon() {
            return Err(SmcError::HorizonExhausted(model.horizon()));
        }
        let s = self.time + 1;
        for (i, (x, lw)) in self
            .states
            .iter_mut()
            .zip(self.block_log_weights.iter_mut())
            .enumerate()
        {
            let mut draws = StreamKey::new(seed, replicate, s, i, Role::Mutation).draws();
            *x = model.sample_step(s, x, &mut draws);
            *lw += model.log_potential(s, x);
        }
        self.time = s;
        Ok(())
    }

    /// Criteria of the current block; undefined at the block start.
    pub fn criteria(&self) -> Result<WeightSummary, SmcError> {
        if self.time == self.block_start {
            return Err(SmcError::EmptyBlock);
        }
        Ok(summarize_weights(&self.block_log_weights))
    }

    /// Resamples at the current time and opens the next block. Returns the ancestors.
    pub fn resample(
        &mut self,
        resampler: Resampler,
        seed: u64,
        replicate: u32,
    ) -> Result<Vec<usize>, SmcError> {
        let ancestors = match resampler {
            Resampler::Select => {
                resample_selection(&self.block_log_weights, seed, replicate, self.time)?
            }
            Resampler::Multinomial => {
                resample_multinomial(&self.block_log_weights, seed, replicate, self.time)?
            }
        };
        self.states = ancestors.iter().map(|&j| self.states[j].clone()).collect();
        self.block_log_weights.iter_mut().for_each(|l| *l = 0.0);
        self.block_index += 1;
        self.block_start = self.time;
        self.resampling_times.push(self.time);
        Ok(ancestors)
    }
}

/// Population averages at one base time, before any resampling at that time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeEstimate {
    pub time: usize,
    pub block: usize,
    /// `(1/N) sum_i phi(x_i)` for each observable `phi`.
    pub unweighted: Vec<f64>,
    /// `sum_i W_i phi(x_i) / sum_i W_i` with the current block weights.
    pub weighted: Vec<f64>,
    pub cv2: f64,
    pub entropy: f64,
    pub ess: f64,
    pub mean_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    /// Closed by the horizon rather than by a resampling.
    pub truncated: bool,
    pub threshold: Option<f64>,
    pub cv2: f64,
    pub entropy: f64,
    pub ess: f64,
    pub mean_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<S> {
    pub time: usize,
    pub states: Vec<S>,
    pub block_log_weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord<S> {
    pub particles: usize,
    pub horizon: usize,
    pub resampling_times: Vec<usize>,
    pub truncated: bool,
    pub blocks: Vec<BlockSummary>,
    /// `log` of the product over closed blocks of the mean block weight.
    pub log_gamma: f64,
    /// One entry per base time `0..=T`.
    pub estimates: Vec<TimeEstimate>,
    /// Time 0, every resampling time, and the horizon when it closes a block
    /// without resampling.
    pub snapshots: Vec<Snapshot<S>>,
    pub ancestry: Vec<Vec<usize>>,
}

impl<S> RunRecord<S> {
    /// Estimate of `gamma_T(1)`.
    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }

    /// Base-time estimate at time `s`.
    pub fn at(&self, s: usize) -> &TimeEstimate {
        &self.estimates[s]
    }
}

/// A run in progress. Cloning it forks the particle evolution.
pub struct Runner<'m, M: FeynmanKac> {
    model: &'m M,
    config: RunConfig,
    system: ParticleSystem<M::State>,
    record: RunRecord<M::State>,
    observed: Vec<f64>,
}

impl<M: FeynmanKac> Clone for Runner<'_, M> {
    fn clone(&self) -> Self {
        Self {
            model: self.model,
            config: self.config.clone(),
            system: self.system.clone(),
            record: self.record.clone(),
            observed: self.observed.clone(),
        }
    }
}

impl<'m, M: FeynmanKac> Runner<'m, M> {
    pub fn new(model: &'m M, config: RunConfig) -> Result<Self, SmcError> {
        let system =
            ParticleSystem::initialize(model, config.particles, config.seed, config.replicate)?;
        let mut runner = Self {
            model,
            observed: vec![0.0; model.num_observables()],
            record: RunRecord {
                particles: config.particles,
                horizon: model.horizon(),
                resampling_times: Vec::new(),
                truncated: false,
                blocks: Vec::new(),
                log_gamma: 0.0,
                estimates: Vec::with_capacity(model.horizon() + 1),
                snapshots: Vec::new(),
                ancestry: Vec::new(),
            },
            config,
            system,
        };
        let summary = summarize_weights(&runner.system.block_log_weights);
        runner.record_estimate(&summary);
        runner.snapshot();
        Ok(runner)
    }

    pub fn system(&self) -> &ParticleSystem<M::State> {
        &self.system
    }

    pub fn time(&self) -> usize {
        self.system.time
    }

    /// Estimates recorded so far, indexed by base time.
    pub fn estimates(&self) -> &[TimeEstimate] {
        &self.record.estimates
    }

    pub fn block_index(&self) -> usize {
        self.system.block_index
    }

    pub fn finished(&self) -> bool {
        self.system.time >= self.model.horizon()
    }

    fn snapshot(&mut self) {
        if self.config.record_snapshots {
            self.record.snapshots.push(Snapshot {
                time: self.system.time,
                states: self.system.states.clone(),
                block_log_weights: self.system.block_log_weights.clone(),
            });
        }
    }

    fn record_estimate(&mut self, summary: &WeightSummary) {
        let k = self.observed.len();
        let mut unweighted = vec![0.0; k];
        let mut weighted = vec![0.0; k];
        let max = self
            .system
            .block_log_weights
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (x, lw) in self
            .system
            .states
            .iter()
            .zip(&self.system.block_log_weights)
        {
            self.model.observe(x, &mut self.observed);
            let w = (lw - max).exp();
            total += w;
            for j in 0..k {
                unweighted[j] += self.observed[j];
                weighted[j] += w * self.observed[j];
            }
        }
        let n = self.system.len() as f64;
        unweighted.iter_mut().for_each(|v| *v /= n);
        weighted.iter_mut().for_each(|v| *v /= total);
        self.record.estimates.push(TimeEstimate {
            time: self.system.time,
            block: self.system.block_index,
            unweighted,
            weighted,
            cv2: summary.cv2,
            entropy: summary.entropy,
            ess: summary.ess,
            mean_weight: summary.mean_weight,
        });
    }

    /// Mutates one step and records the estimates at the new time.
    pub fn advance(&mut self) -> Result<WeightSummary, SmcError> {
        self.system
            .mutate(self.model, self.config.seed, self.config.replicate)?;
        let summary = self.system.criteria()?;
        self.record_estimate(&summary);
        Ok(summary)
    }

    fn close_block(&mut self, summary: &WeightSummary, threshold: Option<f64>, truncated: bool) {
        self.record.log_gamma += summary.mean_weight.ln();
        self.record.blocks.push(BlockSummary {
            index: self.system.block_index,
            start: self.system.block_start,
            end: self.system.time,
            truncated,
            threshold,
            cv2: summary.cv2,
            entropy: summary.entropy,
            ess: summary.ess,
            mean_weight: summary.mean_weight,
        });
    }

    /// Closes the current block at the current time and resamples.
    pub fn resample(
        &mut self,
        summary: &WeightSummary,
        threshold: Option<f64>,
    ) -> Result<(), SmcError> {
        self.close_block(summary, threshold, false);
        self.snapshot();
        let ancestors = self.system.resample(
            self.config.resampler,
            self.config.seed,
            self.config.replicate,
        )?;
        if self.config.record_ancestry {
            self.record.ancestry.push(ancestors);
        }
        Ok(())
    }

    /// Applies `trigger` after one step; returns whether it resampled.
    pub fn step(&mut self, trigger: &Trigger) -> Result<bool, SmcError> {
        let summary = self.advance()?;
        let n = self.system.block_index;
        if trigger.fires(n, self.system.time, &summary) {
            self.resample(&summary, trigger.threshold(n))?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Runs `trigger` to the horizon and closes a trailing partial block.
    pub fn run_to_end(mut self, trigger: &Trigger) -> Result<RunRecord<M::State>, SmcError> {
        while !self.finished() {
            self.step(trigger)?;
        }
        Ok(self.finish(trigger))
    }

    /// Closes a trailing partial block, if any, and returns the record.
    pub fn finish(mut self, trigger: &Trigger) -> RunRecord<M::State> {
        if self.system.block_start < self.system.time {
            let summary = summarize_weights(&self.system.block_log_weights);
            let n = self.system.block_index;
            self.close_block(&summary, trigger.threshold(n), true);
            self.snapshot();
            self.record.truncated = true;
        }
        self.record.resampling_times = self.system.resampling_times.clone();
        self.record
    }
}

pub fn run<M: FeynmanKac>(
    model: &M,
    trigger: &Trigger,
    config: RunConfig,
) -> Result<RunRecord<M::State>, SmcError> {
    if let Trigger::Fixed(times) = trigger {
        Trigger::fixed(times, model.horizon())?;
    }
    Runner::new(model, config)?.run_to_end(trigger)
}

/// Resamples whenever the empirical criterion reaches the block's threshold.
pub fn run_adaptive<M: FeynmanKac>(
    model: &M,
    kind: CriterionKind,
    thresholds: ThresholdSchedule,
    config: RunConfig,
) -> Result<RunRecord<M::State>, SmcError> {
    run(model, &Trigger::Adaptive { kind, thresholds }, config)
}

/// Resamples exactly at `times`.
pub fn run_reference<M: FeynmanKac>(
    model: &M,
    times: &[usize],
    config: RunConfig,
) -> Result<RunRecord<M::State>, SmcError> {
    run(model, &Trigger::fixed(times, model.horizon())?, config)
}
