use nalgebra::DVector;

use crate::exact::{block_moments_enumerated, BlockMoments, BlockSchedule, ExactError};
use crate::model::ValidatedModel;

/// Decomposition of the asymptotic variance of `sqrt(N) [eta_n^N - eta_n](f)` into
/// the contributions of the local fields `V_0, ..., V_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CltTerms {
    /// `eta_n(f)`.
    pub mean: f64,
    /// `terms[p] = E[(D_{p,n} f - K_p D_{p,n} f)^2]` under `eta_{p-1} K_p`.
    pub terms: Vec<f64>,
}

impl CltTerms {
    pub fn total(&self) -> f64 {
        self.terms.iter().sum()
    }
}

fn row_times(v: &[f64], m: &nalgebra::DMatrix<f64>) -> DVector<f64> {
    m.tr_mul(&DVector::from_column_slice(v))
}

fn squared(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x * x)
}

/// Per-block CLT contributions for a terminal test function `f`, block `n <= m`.
///
/// With `A0_p, A1_p, A2_p` the moments of the block-`p` potential (orders 0, 1, 2),
/// `mu^(j)_p = eta_hat_{p-1} A^(j)_p` and `fbar = f - eta_n(f)`:
/// for `p < n`, `D_{p,n} f = W_p u_p / c_p` with `u_p = A1_{p+1} ... A1_{n-1} A0_n fbar`
/// and `c_p = mu^(1)_p A1_{p+1} ... A1_{n-1} 1`; the selection kernel `K_p` leaves
/// `W_{p-1} A1_p u_p / c_p`, because the Boltzmann–Gibbs part integrates
/// `D_{p,n} f` against `eta_p`, which vanishes.
pub fn clt_variance_terms(
    model: &ValidatedModel,
    schedule: &BlockSchedule,
    f: &[f64],
    n: usize,
    cap: u64,
) -> Result<CltTerms, ExactError> {
    if n > schedule.num_blocks() {
        return Err(ExactError::InvalidArgument(format!(
            "block {n} is beyond the {} complete blocks of the schedule",
            schedule.num_blocks()
        )));
    }
    if f.len() != model.num_states() || f.iter().any(|v| !v.is_finite()) {
        return Err(ExactError::InvalidArgument(
            "test function must give a finite value to every state".into(),
        ));
    }
    let eta0 = DVector::from_column_slice(model.initial());
    let f_vec = DVector::from_column_slice(f);
    if n == 0 {
        let mean = eta0.dot(&f_vec);
        let centered = f_vec.add_scalar(-mean);
        return Ok(CltTerms {
            mean,
            terms: vec![eta0.dot(&squared(&centered))],
        });
    }

    let moments: Vec<BlockMoments> = (1..=n)
        .map(|p| block_moments_enumerated(model, p, schedule.times[p - 1], schedule.times[p], cap))
        .collect::<Result<_, _>>()?;
    let block = |p: usize| &moments[p - 1];
    let mu = |p: usize, order: usize| -> DVector<f64> {
        if p == 0 {
            return eta0.clone();
        }
        let a = match order {
            1 => &block(p).weighted,
            _ => &block(p).squared,
        };
        row_times(&schedule.updated_marginals[p - 1], a)
    };

    let predicted = row_times(&schedule.updated_marginals[n - 1], &block(n).unweighted);
    let mean = predicted.dot(&f_vec);
    let fbar = f_vec.add_scalar(-mean);
    let a0_fbar = &block(n).unweighted * &fbar;

    let mut terms = vec![0.0; n + 1];
    terms[n] = predicted.dot(&squared(&fbar)) - mu(n - 1, 2).dot(&squared(&a0_fbar));

    let mut u = a0_fbar;
    let mut h = DVector::from_element(model.num_states(), 1.0);
    for p in (0..n).rev() {
        let c = mu(p, 1).dot(&h);
        terms[p] = if p == 0 {
            eta0.dot(&squared(&u)) / (c * c)
        } else {
            let kept = &block(p).weighted * &u;
            (mu(p, 2).dot(&squared(&u)) - mu(p - 1, 2).dot(&squared(&kept))) / (c * c)
        };
        if p > 0 {
            u = &block(p).weighted * &u;
            h = &block(p).weighted * &h;
        }
    }
    Ok(CltTerms { mean, terms })
}

/// Asymptotic variance of `sqrt(N) [eta_n^N - eta_n](f)` under selection-kernel
/// resampling on `schedule`.
pub fn clt_variance(
    model: &ValidatedModel,
    schedule: &BlockSchedule,
    f: &[f64],
    n: usize,
    cap: u64,
) -> Result<f64, ExactError> {
    Ok(clt_variance_terms(model, schedule, f, n, cap)?.total())
}

/// Limiting variance of the local field `V_n(f)`.
pub fn local_field_variance(
    model: &ValidatedModel,
    schedule: &BlockSchedule,
    f: &[f64],
    n: usize,
    cap: u64,
) -> Result<f64, ExactError> {
    Ok(*clt_variance_terms(model, schedule, f, n, cap)?
        .terms
        .last()
        .unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FiniteModel;

    fn reference(horizon: usize) -> ValidatedModel {
        FiniteModel::homogeneous(
            vec![0.5, 0.5],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![0.3, 0.7],
            horizon,
        )
        .validate()
        .unwrap()
    }

    #[test]
    fn block_zero_is_initial_variance() {
        let m = reference(3);
        let s = BlockSchedule::from_times(&m, vec![0, 1, 2, 3]).unwrap();
        let v = clt_variance(&m, &s, &[0.0, 1.0], 0, 1000).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_function_has_zero_variance() {
        let m = reference(6);
        let s = BlockSchedule::from_times(&m, vec![0, 2, 3, 6]).unwrap();
        for n in 0..=3 {
            let v = clt_variance(&m, &s, &[2.5, 2.5], n, 1000).unwrap();
            assert!(v.abs() < 1e-13, "n={n} v={v}");
        }
    }

    #[test]
    fn block_beyond_schedule_is_rejected() {
        let m = reference(4);
        let s = BlockSchedule::from_times(&m, vec![0, 2]).unwrap();
        assert!(clt_variance(&m, &s, &[0.0, 1.0], 2, 1000).is_err());
    }
}
