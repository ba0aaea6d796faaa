//! Monte Carlo suites that hold the particle engine against the exact oracle.
//!
//! Every suite runs `R` independent replicates of the fixed-schedule engine (replicate
//! `r` uses RNG replicate index `r` under the shared seed) and reduces them in
//! replicate order, so reports are deterministic regardless of thread count.
//! Verdicts are pure functions of the recorded numbers (see the `evaluate`
//! constructors), so they can be recomputed from stored output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{
    block_operators, clt_variance, local_field_variance, BlockSchedule, ExactError,
};
use crate::model::ValidatedModel;
use crate::smc::{Resampler, RunConfig, Runner, SmcError, TimeEstimate, Trigger};
use crate::stats::{bound_main_capped, khinchine_b, lm_norm, moments, wilson, Moments};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Smc(#[from] SmcError),
    #[error("test function oscillation {0} exceeds 1")]
    OscillationTooLarge(f64),
    #[error("invalid experiment: {0}")]
    InvalidArgument(String),
}

/// What every suite shares: the model, the fixed schedule, the terminal test
/// function `f`, the block `n` examined, and the Monte Carlo budget.
#[derive(Clone, Debug)]
pub struct Experiment<'a> {
    pub model: &'a ValidatedModel,
    pub schedule: &'a BlockSchedule,
    pub f: &'a [f64],
    pub block: usize,
    pub particles: usize,
    pub replicates: usize,
    pub seed: u64,
    pub resampler: Resampler,
}

/// `max f - min f`.
pub fn oscillation(f: &[f64]) -> f64 {
    let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

impl Experiment<'_> {
    fn check(&self) -> Result<(), ExperimentError> {
        if self.block > self.schedule.num_blocks() {
            return Err(ExperimentError::InvalidArgument(format!(
                "block {} is beyond the {} complete blocks of the schedule",
                self.block,
                self.schedule.num_blocks()
            )));
        }
        if self.f.len() != self.model.num_states() {
            return Err(ExperimentError::InvalidArgument(
                "test function length differs from the number of states".into(),
            ));
        }
        if self.replicates < 2 || self.particles == 0 {
            return Err(ExperimentError::InvalidArgument(
                "need at least two replicates and one particle".into(),
            ));
        }
        Ok(())
    }

    fn check_osc1(&self) -> Result<(), ExperimentError> {
        let osc = oscillation(self.f);
        if osc > 1.0 {
            return Err(ExperimentError::OscillationTooLarge(osc));
        }
        Ok(())
    }

    fn target_time(&self) -> usize {
        self.schedule.times[self.block]
    }

    /// `eta_n(f)` from the exact flow.
    pub fn exact_mean(&self) -> f64 {
        dot(&self.schedule.predicted_marginals[self.block], self.f)
    }

    /// Estimates at `t_{n-1}` (block 0: time 0) and `t_n` for every replicate.
    fn replicate_estimates(&self) -> Result<Vec<(TimeEstimate, TimeEstimate)>, ExperimentError> {
        let trigger = Trigger::Fixed(self.schedule.times[1..].to_vec());
        let until = self.target_time();
        let prev_time = self.schedule.times[self.block.saturating_sub(1)];
        (0..self.replicates)
            .into_par_iter()
            .map(|r| {
                let config = RunConfig::new(self.particles, self.seed)
                    .replicate(r as u32)
                    .resampler(self.resampler);
                let mut runner = Runner::new(self.model, config)?;
                while runner.time() < until {
                    runner.step(&trigger)?;
                }
                let est = runner.estimates();
                Ok((est[prev_time].clone(), est[until].clone()))
            })
            .collect()
    }

    /// `[eta_n^N - eta_n](f)` per replicate.
    pub fn errors(&self) -> Result<Vec<f64>, ExperimentError> {
        self.check()?;
        let truth = self.exact_mean();
        Ok(self
            .replicate_estimates()?
            .iter()
            .map(|(_, cur)| dot(&cur.unweighted, self.f) - truth)
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub eps: f64,
    pub exceedances: u64,
    pub replicates: u64,
    pub freq: f64,
    pub wilson_upper: f64,
    pub bound: f64,
    pub pass: bool,
}

impl TailRow {
    /// Passes when the Wilson 99% upper limit of the exceedance frequency does not
    /// exceed `min(1, 6 exp(-N eps^2 / (8 sigma1)))`.
    pub fn evaluate(
        eps: f64,
        exceedances: u64,
        replicates: u64,
        particles: usize,
        sigma1: f64,
    ) -> Self {
        let p = wilson(exceedances, replicates);
        let bound = bound_main_capped(eps, particles, sigma1);
        Self {
            eps,
            exceedances,
            replicates,
            freq: p.freq,
            wilson_upper: p.upper,
            bound,
            pass: p.upper <= bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub block: usize,
    pub particles: usize,
    pub sigma1: f64,
    pub rows: Vec<TailRow>,
    pub pass: bool,
}

/// Exceedance counts of `|[eta_n^N - eta_n](f)| >= eps` against the main bound.
pub fn tail_experiment(
    exp: &Experiment<'_>,
    eps_grid: &[f64],
    sigma1: f64,
) -> Result<TailReport, ExperimentError> {
    exp.check_osc1()?;
    let errors = exp.errors()?;
    let rows: Vec<TailRow> = eps_grid
        .iter()
        .map(|&eps| {
            let count = errors.iter().filter(|e| e.abs() >= eps).count() as u64;
            TailRow::evaluate(eps, count, errors.len() as u64, exp.particles, sigma1)
        })
        .collect();
    Ok(TailReport {
        block: exp.block,
        particles: exp.particles,
        sigma1,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmRow {
    pub m: u32,
    pub value: f64,
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
}

impl LmRow {
    /// Passes when `value <= bound + 3 se`.
    pub fn evaluate(m: u32, value: f64, se: f64, bound: f64) -> Self {
        Self {
            m,
            value,
            se,
            bound,
            pass: value <= bound + 3.0 * se,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub block: usize,
    pub particles: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub bias: f64,
    pub bias_se: f64,
    /// `N |bias|`.
    pub scaled_bias: f64,
    /// `sigma1 + 3 N se`.
    pub bias_limit: f64,
    pub bias_pass: bool,
    /// `sqrt(N) E(|error|^m)^(1/m)` against `b(2m)^2 sigma1 / sqrt(N) + b(m) sigma2`.
    pub lm: Vec<LmRow>,
    pub pass: bool,
}

impl BiasReport {
    pub fn evaluate(
        block: usize,
        particles: usize,
        sigma1: f64,
        sigma2: f64,
        bias: f64,
        bias_se: f64,
        lm: Vec<LmRow>,
    ) -> Self {
        let n = particles as f64;
        let scaled_bias = n * bias.abs();
        let bias_limit = sigma1 + 3.0 * n * bias_se;
        let bias_pass = scaled_bias <= bias_limit;
        let pass = bias_pass && lm.iter().all(|r| r.pass);
        Self {
            block,
            particles,
            sigma1,
            sigma2,
            bias,
            bias_se,
            scaled_bias,
            bias_limit,
            bias_pass,
            lm,
            pass,
        }
    }
}

pub fn lm_error_bound(m: u32, particles: usize, sigma1: f64, sigma2: f64) -> f64 {
    let b2m = khinchine_b(2 * m as usize);
    b2m * b2m * sigma1 / (particles as f64).sqrt() + khinchine_b(m as usize) * sigma2
}

pub fn bias_and_lm_experiment(
    exp: &Experiment<'_>,
    m_list: &[u32],
    sigma1: f64,
    sigma2: f64,
) -> Result<BiasReport, ExperimentError> {
    exp.check_osc1()?;
    let errors = exp.errors()?;
    let mom = moments(&errors);
    let root_n = (exp.particles as f64).sqrt();
    let lm = m_list
        .iter()
        .map(|&m| {
            let norm = lm_norm(&errors, m);
            LmRow::evaluate(
                m,
                root_n * norm.value,
                root_n * norm.se,
                lm_error_bound(m, exp.particles, sigma1, sigma2),
            )
        })
        .collect();
    Ok(BiasReport::evaluate(
        exp.block,
        exp.particles,
        sigma1,
        sigma2,
        mom.mean,
        mom.mean_se,
        lm,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalFieldReport {
    pub block: usize,
    pub particles: usize,
    pub moments: Moments,
    pub mean_pass: bool,
    pub exact_variance: f64,
    pub variance_pass: bool,
    /// `E(|V_n(f)|^m)^(1/m)` against `b(m) osc(f)`.
    pub lm: Vec<LmRow>,
    pub pass: bool,
}

impl LocalFieldReport {
    /// Mean within 3 standard errors of 0, variance within 3 standard errors of
    /// its limit, every `L_m` row passing.
    pub fn evaluate(
        block: usize,
        particles: usize,
        moments: Moments,
        exact_variance: f64,
        lm: Vec<LmRow>,
    ) -> Self {
        let mean_pass = moments.mean.abs() <= 3.0 * moments.mean_se;
        let variance_pass = (moments.variance - exact_variance).abs() <= 3.0 * moments.variance_se;
        let pass = mean_pass && variance_pass && lm.iter().all(|r| r.pass);
        Self {
            block,
            particles,
            moments,
            mean_pass,
            exact_variance,
            variance_pass,
            lm,
            pass,
        }
    }
}

/// Samples of `V_n(f) = sqrt(N) [eta_n^N(f) - eta_{n-1}^N K_n(f)]`.
///
/// The conditional mean `eta_{n-1}^N K_n(f)` is the Boltzmann–Gibbs average of
/// `A0_n f` over the population at `t_{n-1}`, because both resampling schemes
/// are unbiased for it. For `n = 0` it is `eta_0(f)`.
pub fn local_field_samples(exp: &Experiment<'_>) -> Result<Vec<f64>, ExperimentError> {
    exp.check()?;
    let root_n = (exp.particles as f64).sqrt();
    let transported: Option<Vec<f64>> = (exp.block > 0).then(|| {
        let ops = block_operators(exp.model, exp.schedule);
        let a0 = &ops.blocks[exp.block].unweighted;
        (0..exp.model.num_states())
            .map(|x| {
                (0..exp.model.num_states())
                    .map(|y| a0[(x, y)] * exp.f[y])
                    .sum()
            })
            .collect()
    });
    let eta0_f = dot(exp.model.initial(), exp.f);
    Ok(exp
        .replicate_estimates()?
        .iter()
        .map(|(prev, cur)| {
            let centre = match &transported {
                Some(g) => dot(&prev.weighted, g),
                None => eta0_f,
            };
            root_n * (dot(&cur.unweighted, exp.f) - centre)
        })
        .collect())
}

pub fn local_field_experiment(
    exp: &Experiment<'_>,
    m_list: &[u32],
    enumeration_cap: u64,
) -> Result<LocalFieldReport, ExperimentError> {
    let exact_variance =
        local_field_variance(exp.model, exp.schedule, exp.f, exp.block, enumeration_cap)?;
    let samples = local_field_samples(exp)?;
    let osc = oscillation(exp.f);
    let lm = m_list
        .iter()
        .map(|&m| {
            let norm = lm_norm(&samples, m);
            LmRow::evaluate(m, norm.value, norm.se, khinchine_b(m as usize) * osc)
        })
        .collect();
    Ok(LocalFieldReport::evaluate(
        exp.block,
        exp.particles,
        moments(&samples),
        exact_variance,
        lm,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub block: usize,
    pub particles: usize,
    pub moments: Moments,
    pub exact_variance: f64,
    /// Empirical over exact variance; 1 when both vanish.
    pub ratio: f64,
    pub ratio_pass: bool,
    pub normality_pass: bool,
    pub pass: bool,
}

impl CltReport {
    /// Variance ratio in `[0.9, 1.1]`, `|skewness| < 0.2`, `|excess kurtosis| < 0.5`.
    pub fn evaluate(block: usize, particles: usize, moments: Moments, exact_variance: f64) -> Self {
        let ratio = if exact_variance == 0.0 && moments.variance == 0.0 {
            1.0
        } else {
            moments.variance / exact_variance
        };
        let ratio_pass = (0.9..=1.1).contains(&ratio);
        let normality_pass = moments.skewness.abs() < 0.2 && moments.excess_kurtosis.abs() < 0.5;
        Self {
            block,
            particles,
            pass: ratio_pass && normality_pass,
            moments,
            exact_variance,
            ratio,
            ratio_pass,
            normality_pass,
        }
    }
}

/// `sqrt(N) [eta_n^N - eta_n](f)` against the exact asymptotic variance.
pub fn clt_experiment(
    exp: &Experiment<'_>,
    enumeration_cap: u64,
) -> Result<CltReport, ExperimentError> {
    let exact_variance = clt_variance(exp.model, exp.schedule, exp.f, exp.block, enumeration_cap)?;
    let root_n = (exp.particles as f64).sqrt();
    let scaled: Vec<f64> = exp.errors()?.iter().map(|e| root_n * e).collect();
    Ok(CltReport::evaluate(
        exp.block,
        exp.particles,
        moments(&scaled),
        exact_variance,
    ))
}
