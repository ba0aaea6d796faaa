use serde::{Deserialize, Serialize};

use crate::exact::criteria::BlockPropagator;
use crate::exact::{CriterionKind, ExactError};
use crate::model::ValidatedModel;
use crate::thresholds::ThresholdSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cv2,
    Entropy,
    Fixed,
}

impl From<CriterionKind> for ScheduleKind {
    fn from(kind: CriterionKind) -> Self {
        match kind {
            CriterionKind::Cv2 => Self::Cv2,
            CriterionKind::Entropy => Self::Entropy,
        }
    }
}

/// Deterministic resampling times and the exact flow along them.
///
/// `times = [t_0, ..., t_m]` are the resampling times. When `truncated` is set the
/// horizon ended a trailing block `(t_m, T]` before its criterion fired; that block
/// has a curve but no entry in `times`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSchedule {
    pub kind: ScheduleKind,
    pub horizon: usize,
    pub times: Vec<usize>,
    pub truncated: bool,
    /// `eta_hat_n` terminal marginal at `t_n`, for every `n <= m`.
    pub updated_marginals: Vec<Vec<f64>>,
    /// `eta_n` terminal marginal at `t_n`, for every `n <= m`.
    pub predicted_marginals: Vec<Vec<f64>>,
    /// Criterion values at `s = t_n + 1 ..= t_{n+1}` (or `T` for a truncated block).
    /// Fixed schedules record the limiting CV².
    pub criterion_curves: Vec<Vec<f64>>,
    /// Thresholds used for each block that has a curve (empty for fixed schedules).
    pub thresholds: Vec<f64>,
}

impl BlockSchedule {
    /// Number of complete blocks `m`.
    pub fn num_blocks(&self) -> usize {
        self.times.len() - 1
    }

    /// End time of the block with curve index `n`.
    pub fn block_end(&self, n: usize) -> usize {
        self.times.get(n + 1).copied().unwrap_or(self.horizon)
    }

    /// A schedule that resamples exactly at `times`.
    pub fn from_times(model: &ValidatedModel, times: Vec<usize>) -> Result<Self, ExactError> {
        if times.first() != Some(&0) {
            return Err(ExactError::InvalidSchedule("times must start at 0".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExactError::InvalidSchedule(
                "times must be strictly increasing".into(),
            ));
        }
        if *times.last().unwrap() > model.horizon() {
            return Err(ExactError::InvalidSchedule(format!(
                "time {} beyond horizon {}",
                times.last().unwrap(),
                model.horizon()
            )));
        }
        let mut sched = Self::empty(model, ScheduleKind::Fixed);
        let mut start = 0;
        for &end in &times[1..] {
            let mut prop =
                BlockPropagator::new(model, start, sched.updated_marginals.last().unwrap());
            let mut curve = Vec::with_capacity(end - start);
            while prop.time() < end {
                prop.step()?;
                curve.push(prop.cv2());
            }
            sched.close_block(&prop, curve, end);
            start = end;
        }
        if start < model.horizon() {
            let mut prop =
                BlockPropagator::new(model, start, sched.updated_marginals.last().unwrap());
            let mut curve = Vec::new();
            while prop.time() < model.horizon() {
                prop.step()?;
                curve.push(prop.cv2());
            }
            sched.criterion_curves.push(curve);
            sched.truncated = true;
        }
        Ok(sched)
    }

    fn empty(model: &ValidatedModel, kind: ScheduleKind) -> Self {
        Self {
            kind,
            horizon: model.horizon(),
            times: vec![0],
            truncated: false,
            updated_marginals: vec![model.initial().to_vec()],
            predicted_marginals: vec![model.initial().to_vec()],
            criterion_curves: Vec::new(),
            thresholds: Vec::new(),
        }
    }

    fn close_block(&mut self, prop: &BlockPropagator<'_>, curve: Vec<f64>, end: usize) {
        self.times.push(end);
        self.updated_marginals.push(prop.updated());
        self.predicted_marginals.push(prop.predicted().to_vec());
        self.criterion_curves.push(curve);
    }
}

/// `t_{n+1} = inf { s > t_n : H_n(s) >= a_n }`, scanned block by block from the
/// exact updated marginal at `t_n`.
pub fn deterministic_times(
    model: &ValidatedModel,
    kind: CriterionKind,
    thresholds: &ThresholdSchedule,
) -> Result<BlockSchedule, ExactError> {
    let mut sched = BlockSchedule::empty(model, kind.into());
    let mut start = 0;
    let mut n = 0;
    while start < model.horizon() {
        let a = thresholds.get(n);
        let mut prop = BlockPropagator::new(model, start, sched.updated_marginals.last().unwrap());
        let mut curve = Vec::new();
        let mut hit = false;
        while prop.time() < model.horizon() {
            prop.step()?;
            let value = prop.value(kind);
            curve.push(value);
            if value >= a {
                hit = true;
                break;
            }
        }
        sched.thresholds.push(a);
        if hit {
            let end = prop.time();
            sched.close_block(&prop, curve, end);
            start = end;
            n += 1;
        } else {
            sched.criterion_curves.push(curve);
            sched.truncated = true;
            break;
        }
    }
    Ok(sched)
}

/// `min_n min_{t_n <= s <= t_{n+1}} |H_n(s) - a_n|`, with `H_n(t_n) = 0`.
///
/// Fails with `DegenerateThreshold` when a curve value equals its threshold.
pub fn epsilon_m(schedule: &BlockSchedule) -> Result<f64, ExactError> {
    if schedule.thresholds.len() != schedule.criterion_curves.len() {
        return Err(ExactError::InvalidArgument(
            "schedule carries no thresholds for some block".into(),
        ));
    }
    let mut eps = f64::INFINITY;
    for (n, (curve, a)) in schedule
        .criterion_curves
        .iter()
        .zip(&schedule.thresholds)
        .enumerate()
    {
        eps = eps.min(*a);
        for (offset, value) in curve.iter().enumerate() {
            let gap = (value - a).abs();
            if gap == 0.0 {
                return Err(ExactError::DegenerateThreshold {
                    block: n,
                    s: schedule.times[n] + offset + 1,
                });
            }
            eps = eps.min(gap);
        }
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FiniteModel;

    fn constant_potential(g: f64, horizon: usize) -> ValidatedModel {
        FiniteModel::homogeneous(
            vec![0.4, 0.6],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![g, g],
            horizon,
        )
        .validate()
        .unwrap()
    }

    #[test]
    fn entropy_constant_potential_gives_equal_blocks() {
        let g: f64 = 0.5;
        let a = 2.3 * -g.ln();
        let m = constant_potential(g, 10);
        let s = deterministic_times(
            &m,
            CriterionKind::Entropy,
            &ThresholdSchedule::constant(a).unwrap(),
        )
        .unwrap();
        assert_eq!(s.times, vec![0, 3, 6, 9]);
        assert!(s.truncated);
    }

    #[test]
    fn cv2_state_independent_never_fires() {
        let m = constant_potential(0.7, 6);
        let s = deterministic_times(
            &m,
            CriterionKind::Cv2,
            &ThresholdSchedule::constant(0.1).unwrap(),
        )
        .unwrap();
        assert_eq!(s.times, vec![0]);
        assert!(s.truncated);
        assert_eq!(s.criterion_curves.len(), 1);
        assert_eq!(s.criterion_curves[0].len(), 6);
    }

    #[test]
    fn epsilon_on_entropy_lattice() {
        let g: f64 = 0.5;
        let step = -g.ln();
        let m = constant_potential(g, 8);
        let s = deterministic_times(
            &m,
            CriterionKind::Entropy,
            &ThresholdSchedule::constant(1.5 * step).unwrap(),
        )
        .unwrap();
        let eps = epsilon_m(&s).unwrap();
        assert!((eps - 0.5 * step).abs() < 1e-12);
    }

    #[test]
    fn exact_hit_is_degenerate() {
        let m = FiniteModel::homogeneous(vec![1.0], vec![vec![1.0]], vec![0.5], 4)
            .validate()
            .unwrap();
        let s = deterministic_times(
            &m,
            CriterionKind::Entropy,
            &ThresholdSchedule::constant(-(0.5f64.ln())).unwrap(),
        )
        .unwrap();
        assert_eq!(s.times, vec![0, 1, 2, 3, 4]);
        assert!(matches!(
            epsilon_m(&s),
            Err(ExactError::DegenerateThreshold { block: 0, s: 1 })
        ));
    }

    #[test]
    fn fixed_schedule_validation() {
        let m = constant_potential(0.5, 4);
        assert!(BlockSchedule::from_times(&m, vec![1, 2]).is_err());
        assert!(BlockSchedule::from_times(&m, vec![0, 2, 2]).is_err());
        assert!(BlockSchedule::from_times(&m, vec![0, 5]).is_err());
        let s = BlockSchedule::from_times(&m, vec![0, 2, 4]).unwrap();
        assert!(!s.truncated);
        assert_eq!(s.num_blocks(), 2);
        let s = BlockSchedule::from_times(&m, vec![0, 3]).unwrap();
        assert!(s.truncated);
        assert_eq!(s.criterion_curves.len(), 2);
    }
}
