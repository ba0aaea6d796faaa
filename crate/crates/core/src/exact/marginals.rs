use crate::exact::{normalized, vec_mat};
use crate::model::ValidatedModel;

/// Per-time Feynman–Kac marginals for `s = 0..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    /// Law at `s` weighted by `G_1 ... G_{s-1}` (index 0 is the initial law).
    pub predicted: Vec<Vec<f64>>,
    /// Law at `s` weighted by `G_1 ... G_s` (index 0 is the initial law).
    pub updated: Vec<Vec<f64>>,
    /// `log gamma_s(1)`, with `gamma_s(1) = E[G_1(X_1) ... G_s(X_s)]`.
    pub log_gamma: Vec<f64>,
}

impl Marginals {
    pub fn gamma(&self, s: usize) -> f64 {
        self.log_gamma[s].exp()
    }
}

/// Forward recursion `a_s = (a_{s-1} M_s) ⊙ G_s`, kept normalized with the
/// scale accumulated in `log_gamma`.
pub fn fk_marginals(model: &ValidatedModel) -> Marginals {
    let t = model.horizon();
    let mut predicted = Vec::with_capacity(t + 1);
    let mut updated = Vec::with_capacity(t + 1);
    let mut log_gamma = Vec::with_capacity(t + 1);
    predicted.push(model.initial().to_vec());
    updated.push(model.initial().to_vec());
    log_gamma.push(0.0);
    for s in 1..=t {
        let pred = vec_mat(&updated[s - 1], model.kernel(s));
        let weighted: Vec<f64> = pred
            .iter()
            .zip(model.potential(s))
            .map(|(p, g)| p * g)
            .collect();
        let mass: f64 = weighted.iter().sum();
        log_gamma.push(log_gamma[s - 1] + mass.ln());
        updated.push(normalized(&weighted));
        predicted.push(pred);
    }
    Marginals {
        predicted,
        updated,
        log_gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FiniteModel;

    #[test]
    fn single_state_gamma_is_product() {
        let mut raw = FiniteModel::homogeneous(vec![1.0], vec![vec![1.0]], vec![0.5], 3);
        raw.potentials[1] = vec![0.25];
        let m = fk_marginals(&raw.validate().unwrap());
        assert!((m.gamma(3) - 0.5 * 0.25 * 0.5).abs() < 1e-15);
        assert!(m.updated.iter().all(|u| u == &vec![1.0]));
    }

    #[test]
    fn memoryless_kernel_predicts_its_row() {
        let row = vec![0.3, 0.7];
        let model =
            FiniteModel::homogeneous(vec![0.9, 0.1], vec![row.clone(); 2], vec![0.2, 0.9], 4)
                .validate()
                .unwrap();
        let m = fk_marginals(&model);
        for s in 1..=4 {
            for (got, want) in m.predicted[s].iter().zip(&row) {
                assert!((got - want).abs() < 1e-15);
            }
        }
    }
}
