use nalgebra::DMatrix;

use crate::exact::{BlockSchedule, ExactError};
use crate::model::ValidatedModel;

/// Moments of the block potential `W` of one block, keyed by (start, end) state:
/// entry `(x, y)` of `unweighted`, `weighted`, `squared` is `E_x[1{end = y} W^j]`
/// for `j = 0, 1, 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMoments {
    pub unweighted: DMatrix<f64>,
    pub weighted: DMatrix<f64>,
    pub squared: DMatrix<f64>,
}

impl BlockMoments {
    fn identity(k: usize) -> Self {
        Self {
            unweighted: DMatrix::identity(k, k),
            weighted: DMatrix::identity(k, k),
            squared: DMatrix::identity(k, k),
        }
    }
}

/// Per-block operators indexed by block `p = 0..=m`; block 0 is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOperators {
    pub blocks: Vec<BlockMoments>,
}

impl BlockOperators {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len() - 1
    }

    /// `Q_{p,n} = Q_{p+1} ... Q_n` with `Q_k` the weighted matrix of block `k`.
    pub fn weighted_product(&self, p: usize, n: usize) -> DMatrix<f64> {
        let k = self.blocks[0].weighted.nrows();
        (p + 1..=n).fold(DMatrix::identity(k, k), |acc, b| {
            acc * &self.blocks[b].weighted
        })
    }

    /// `A1_{p+1} ... A1_{n-1} A0_n`: the transport from the end of block `p` to the
    /// end of block `n`, weighted through block `n - 1` only.
    pub fn predicted_transport(&self, p: usize, n: usize) -> DMatrix<f64> {
        assert!(p < n);
        self.weighted_product(p, n - 1) * &self.blocks[n].unweighted
    }
}

fn step_matrix(model: &ValidatedModel, k: usize, power: i32) -> DMatrix<f64> {
    let size = model.num_states();
    let kernel = model.kernel(k);
    let g = model.potential(k);
    DMatrix::from_fn(size, size, |x, y| kernel[x][y] * g[y].powi(power))
}

/// Block matrices by products of one-step matrices over the complete blocks.
pub fn block_operators(model: &ValidatedModel, schedule: &BlockSchedule) -> BlockOperators {
    let k = model.num_states();
    let mut blocks = vec![BlockMoments::identity(k)];
    for w in schedule.times.windows(2) {
        let mut moments = BlockMoments::identity(k);
        for s in w[0] + 1..=w[1] {
            moments.unweighted *= step_matrix(model, s, 0);
            moments.weighted *= step_matrix(model, s, 1);
            moments.squared *= step_matrix(model, s, 2);
        }
        blocks.push(moments);
    }
    BlockOperators { blocks }
}

/// Block moments over `(start, end]` by enumerating every within-block path.
///
/// `block` only labels the error when `K^(end - start)` exceeds `cap`.
pub fn block_moments_enumerated(
    model: &ValidatedModel,
    block: usize,
    start: usize,
    end: usize,
    cap: u64,
) -> Result<BlockMoments, ExactError> {
    let k = model.num_states();
    let required = (k as u128)
        .checked_pow((end - start) as u32)
        .unwrap_or(u128::MAX);
    if required > u128::from(cap) {
        return Err(ExactError::EnumerationCapExceeded {
            block,
            required,
            cap,
        });
    }
    let mut out = BlockMoments {
        unweighted: DMatrix::zeros(k, k),
        weighted: DMatrix::zeros(k, k),
        squared: DMatrix::zeros(k, k),
    };
    for x in 0..k {
        walk(model, x, x, start, end, 1.0, 1.0, &mut out);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    model: &ValidatedModel,
    origin: usize,
    state: usize,
    time: usize,
    end: usize,
    prob: f64,
    weight: f64,
    out: &mut BlockMoments,
) {
    if time == end {
        out.unweighted[(origin, state)] += prob;
        out.weighted[(origin, state)] += prob * weight;
        out.squared[(origin, state)] += prob * weight * weight;
        return;
    }
    let next = time + 1;
    let row = &model.kernel(next)[state];
    let g = model.potential(next);
    for (y, p) in row.iter().enumerate() {
        if *p > 0.0 {
            walk(model, origin, y, next, end, prob * p, weight * g[y], out);
        }
    }
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
    fn single_step_block_is_kernel_times_potential() {
        let m = reference(2);
        let s = BlockSchedule::from_times(&m, vec![0, 1, 2]).unwrap();
        let ops = block_operators(&m, &s);
        let q = &ops.blocks[1].weighted;
        assert!((q[(0, 0)] - 0.27).abs() < 1e-15);
        assert!((q[(0, 1)] - 0.07).abs() < 1e-15);
        assert!((q[(1, 0)] - 0.06).abs() < 1e-15);
        assert!((q[(1, 1)] - 0.56).abs() < 1e-15);
        assert_eq!(ops.weighted_product(1, 1), DMatrix::identity(2, 2));
    }

    #[test]
    fn enumeration_matches_products() {
        let m = reference(6);
        let s = BlockSchedule::from_times(&m, vec![0, 2, 6]).unwrap();
        let ops = block_operators(&m, &s);
        let e = block_moments_enumerated(&m, 2, 2, 6, 1_000).unwrap();
        assert!((e.unweighted - &ops.blocks[2].unweighted).amax() < 1e-14);
        assert!((e.weighted - &ops.blocks[2].weighted).amax() < 1e-14);
        assert!((e.squared - &ops.blocks[2].squared).amax() < 1e-14);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let m = reference(6);
        let err = block_moments_enumerated(&m, 1, 0, 6, 63).unwrap_err();
        assert_eq!(
            err,
            ExactError::EnumerationCapExceeded {
                block: 1,
                required: 64,
                cap: 63
            }
        );
    }
}
