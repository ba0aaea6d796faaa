use serde::{Deserialize, Serialize};

use crate::exact::{dot, normalized, vec_mat, ExactError};
use crate::model::ValidatedModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Cv2,
    Entropy,
}

/// Joint forward recursion over one block, started at `start` from a terminal
/// marginal `eta_hat`.
///
/// `first` carries the law weighted by `W`, `second` the law weighted by `W^2`,
/// and `plain` the unweighted prediction. `first` is renormalized every step and
/// `second` is divided by the square of the same factor, so
/// `sum(second) / sum(first)^2 = E[W^2] / E[W]^2` stays exact.
pub(crate) struct BlockPropagator<'a> {
    model: &'a ValidatedModel,
    start: usize,
    time: usize,
    first: Vec<f64>,
    second: Vec<f64>,
    plain: Vec<f64>,
    entropy: f64,
}

impl<'a> BlockPropagator<'a> {
    pub(crate) fn new(model: &'a ValidatedModel, start: usize, eta_hat: &[f64]) -> Self {
        Self {
            model,
            start,
            time: start,
            first: eta_hat.to_vec(),
            second: eta_hat.to_vec(),
            plain: eta_hat.to_vec(),
            entropy: 0.0,
        }
    }

    pub(crate) fn time(&self) -> usize {
        self.time
    }

    pub(crate) fn step(&mut self) -> Result<(), ExactError> {
        let s = self.time + 1;
        let g = self.model.potential(s);
        let kernel = self.model.kernel(s);
        self.plain = vec_mat(&self.plain, kernel);
        self.entropy -= self
            .plain
            .iter()
            .zip(g)
            .map(|(p, gv)| p * gv.ln())
            .sum::<f64>();
        let mut first = vec_mat(&self.first, kernel);
        let mut second = vec_mat(&self.second, kernel);
        for ((a, b), gv) in first.iter_mut().zip(second.iter_mut()).zip(g) {
            *a *= gv;
            *b *= gv * gv;
        }
        let scale: f64 = first.iter().sum();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ExactError::DegenerateExpectation {
                start: self.start,
                s,
            });
        }
        first.iter_mut().for_each(|a| *a /= scale);
        second.iter_mut().for_each(|b| *b /= scale * scale);
        self.first = first;
        self.second = second;
        self.time = s;
        Ok(())
    }

    pub(crate) fn cv2(&self) -> f64 {
        let mean: f64 = self.first.iter().sum();
        let second: f64 = self.second.iter().sum();
        (second / (mean * mean) - 1.0).max(0.0)
    }

    pub(crate) fn entropy(&self) -> f64 {
        self.entropy
    }

    pub(crate) fn value(&self, kind: CriterionKind) -> f64 {
        match kind {
            CriterionKind::Cv2 => self.cv2(),
            CriterionKind::Entropy => self.entropy(),
        }
    }

    /// Terminal marginal of the weighted law at the current time.
    pub(crate) fn updated(&self) -> Vec<f64> {
        normalized(&self.first)
    }

    /// Terminal marginal of the unweighted prediction at the current time.
    pub(crate) fn predicted(&self) -> &[f64] {
        &self.plain
    }
}

fn check_window(
    model: &ValidatedModel,
    start: usize,
    s: usize,
    eta_hat: &[f64],
) -> Result<(), ExactError> {
    if start >= s || s > model.horizon() {
        return Err(ExactError::InvalidArgument(format!(
            "need start < s <= T, got start={start}, s={s}, T={}",
            model.horizon()
        )));
    }
    if eta_hat.len() != model.num_states() {
        return Err(ExactError::InvalidArgument(format!(
            "start marginal has length {}, expected {}",
            eta_hat.len(),
            model.num_states()
        )));
    }
    Ok(())
}

/// `E[W^2] / E[W]^2 - 1` for `W = W_{start,s}` under the unweighted chain
/// started from `eta_hat` at `start`.
pub fn limiting_cv2(
    model: &ValidatedModel,
    start: usize,
    eta_hat: &[f64],
    s: usize,
) -> Result<f64, ExactError> {
    check_window(model, start, s, eta_hat)?;
    let mut prop = BlockPropagator::new(model, start, eta_hat);
    while prop.time() < s {
        prop.step()?;
    }
    Ok(prop.cv2())
}

/// `-E[log W_{start,s}]` under the unweighted chain started from `eta_hat`.
pub fn limiting_entropy(
    model: &ValidatedModel,
    start: usize,
    eta_hat: &[f64],
    s: usize,
) -> Result<f64, ExactError> {
    check_window(model, start, s, eta_hat)?;
    let mut plain = eta_hat.to_vec();
    let mut total = 0.0;
    for k in start + 1..=s {
        plain = vec_mat(&plain, model.kernel(k));
        let logs: Vec<f64> = model.potential(k).iter().map(|g| -g.ln()).collect();
        total += dot(&plain, &logs);
    }
    Ok(total)
}

/// Criterion values for `s = start+1 ..= end`.
pub fn criterion_curve(
    model: &ValidatedModel,
    kind: CriterionKind,
    start: usize,
    eta_hat: &[f64],
    end: usize,
) -> Result<Vec<f64>, ExactError> {
    check_window(model, start, end, eta_hat)?;
    let mut prop = BlockPropagator::new(model, start, eta_hat);
    let mut out = Vec::with_capacity(end - start);
    while prop.time() < end {
        prop.step()?;
        out.push(prop.value(kind));
    }
    Ok(out)
}
