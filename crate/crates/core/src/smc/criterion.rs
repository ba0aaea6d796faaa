use serde::{Deserialize, Serialize};

use crate::exact::CriterionKind;

/// Empirical criteria of a weighted particle population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    /// `N sum w^2 / (sum w)^2 - 1`.
    pub cv2: f64,
    /// `-(1/N) sum log W_i` on the raw block weights.
    pub entropy: f64,
    /// `N / (1 + cv2)`.
    pub ess: f64,
    /// `(1/N) sum W_i`.
    pub mean_weight: f64,
}

impl WeightSummary {
    pub fn value(&self, kind: CriterionKind) -> f64 {
        match kind {
            CriterionKind::Cv2 => self.cv2,
            CriterionKind::Entropy => self.entropy,
        }
    }
}

/// Criteria of the population carrying block log-weights `log_w`.
///
/// The CV² is computed from weights shifted by their maximum, so it is exact for
/// any common scale of the weights. Equal weights give exactly zero.
pub fn summarize_weights(log_w: &[f64]) -> WeightSummary {
    let n = log_w.len() as f64;
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut s1, mut s2, mut raw_sum) = (0.0, 0.0, 0.0);
    for l in log_w {
        let w = (l - max).exp();
        s1 += w;
        s2 += w * w;
        raw_sum += l;
    }
    let cv2 = (n * s2 / (s1 * s1) - 1.0).max(0.0);
    WeightSummary {
        cv2,
        entropy: -raw_sum / n,
        ess: n / (1.0 + cv2),
        mean_weight: max.exp() * s1 / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_weights() {
        let s = summarize_weights(&[-0.7; 16]);
        assert_eq!(s.cv2, 0.0);
        assert_eq!(s.ess, 16.0);
        assert!((s.entropy - 0.7).abs() < 1e-15);
    }

    #[test]
    fn four_weights() {
        let lw: Vec<f64> = [0.1f64, 0.2, 0.3, 0.4].iter().map(|w| w.ln()).collect();
        let s = summarize_weights(&lw);
        assert!((s.cv2 - 0.2).abs() < 1e-14);
        assert!((s.ess - 10.0 / 3.0).abs() < 1e-13);
        assert!((s.mean_weight - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dominant_weight_degenerates() {
        let n = 8;
        let mut lw = vec![-800.0; n];
        lw[3] = -1.0;
        let s = summarize_weights(&lw);
        assert!((s.cv2 - (n as f64 - 1.0)).abs() < 1e-12);
        assert!((s.ess - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance_of_cv2() {
        let lw = [-3.0, -1.5, -0.2, -2.2];
        let shifted: Vec<f64> = lw.iter().map(|l| l - 500.0).collect();
        let a = summarize_weights(&lw);
        let b = summarize_weights(&shifted);
        assert!((a.cv2 - b.cv2).abs() < 1e-12);
        assert!((b.entropy - a.entropy - 500.0).abs() < 1e-9);
    }
}
