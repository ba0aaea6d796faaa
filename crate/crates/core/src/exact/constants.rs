use nalgebra::{DMatrix, DVector};

use crate::exact::{block_operators, BlockOperators, BlockSchedule};
use crate::model::ValidatedModel;

/// Relative slack allowed when checking the mixing inequalities in floating point.
const CHECK_TOL: f64 = 1e-12;

/// Semigroup and concentration constants over the complete blocks `0..=m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantsReport {
    /// `q[n][p] = q_{p,n}` for `p <= n`.
    pub q: Vec<Vec<f64>>,
    /// `beta[n][p] = beta(P_{p,n})` for `p <= n`.
    pub beta: Vec<Vec<f64>>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    pub sigma_tilde_sq: Vec<f64>,
    /// `delta[p]` for `p < m`: minorization constant of the first step of block `p + 1`.
    pub delta: Vec<f64>,
    /// `r[p] = r_{p,p+1}`: spread of the block-`p` potential, `r[0] = 1`.
    pub r: Vec<f64>,
    /// Set when some `delta[p]` vanishes; the mixing checks are then skipped.
    pub mixing_unavailable: bool,
}

impl ConstantsReport {
    pub fn num_blocks(&self) -> usize {
        self.q.len() - 1
    }

    pub fn q(&self, p: usize, n: usize) -> f64 {
        self.q[n][p]
    }

    pub fn beta(&self, p: usize, n: usize) -> f64 {
        self.beta[n][p]
    }

    /// Checks, for every `p < n <= m`,
    /// `q_{p,n} <= r_{p,p+1} / delta_p`,
    /// `beta(P_{p,n}) <= prod_{p <= k < n} (1 - delta_k^2)`,
    /// and for every `n` and `alpha` in `0..=3`,
    /// `sum_p q_{p,n}^alpha beta(P_{p,n}) <= r_max^alpha / delta_min^(2 + alpha)`.
    pub fn mixing_report(&self) -> Option<MixingReport> {
        if self.mixing_unavailable {
            return None;
        }
        let m = self.num_blocks();
        let mut report = MixingReport {
            delta_min: self.delta.iter().cloned().fold(1.0, f64::min),
            r_max: self.r.iter().cloned().fold(1.0, f64::max),
            checked: 0,
            q_violations: Vec::new(),
            beta_violations: Vec::new(),
            series_violations: Vec::new(),
        };
        for n in 1..=m {
            for p in 0..n {
                let q_bound = self.r[p] / self.delta[p];
                report.checked += 1;
                if self.q(p, n) > q_bound * (1.0 + CHECK_TOL) {
                    report.q_violations.push((p, n));
                }
                let beta_bound: f64 = (p..n).map(|k| 1.0 - self.delta[k].powi(2)).product();
                report.checked += 1;
                if self.beta(p, n) > beta_bound * (1.0 + CHECK_TOL) + CHECK_TOL {
                    report.beta_violations.push((p, n));
                }
            }
        }
        for n in 0..=m {
            for alpha in 0..=3 {
                let series: f64 = (0..=n)
                    .map(|p| self.q(p, n).powi(alpha) * self.beta(p, n))
                    .sum();
                let bound = report.r_max.powi(alpha) / report.delta_min.powi(2 + alpha);
                report.checked += 1;
                if series > bound * (1.0 + CHECK_TOL) {
                    report.series_violations.push((n, alpha as u32));
                }
            }
        }
        Some(report)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingReport {
    pub delta_min: f64,
    pub r_max: f64,
    pub checked: usize,
    pub q_violations: Vec<(usize, usize)>,
    pub beta_violations: Vec<(usize, usize)>,
    pub series_violations: Vec<(usize, u32)>,
}

impl MixingReport {
    pub fn holds(&self) -> bool {
        self.q_violations.is_empty()
            && self.beta_violations.is_empty()
            && self.series_violations.is_empty()
    }
}

/// Largest and smallest block potential over admissible block excursions, per
/// end state; `None` for end states the block cannot reach.
fn potential_extremes(
    model: &ValidatedModel,
    schedule: &BlockSchedule,
    p: usize,
) -> Vec<Option<(f64, f64)>> {
    let k = model.num_states();
    let mut ext: Vec<Option<(f64, f64)>> = vec![Some((1.0, 1.0)); k];
    if p == 0 {
        return ext;
    }
    for s in schedule.times[p - 1] + 1..=schedule.times[p] {
        let kernel = model.kernel(s);
        let g = model.potential(s);
        ext = (0..k)
            .map(|y| {
                let mut acc: Option<(f64, f64)> = None;
                for x in 0..k {
                    if kernel[x][y] > 0.0 {
                        if let Some((hi, lo)) = ext[x] {
                            acc = Some(match acc {
                                None => (hi, lo),
                                Some((a, b)) => (a.max(hi), b.min(lo)),
                            });
                        }
                    }
                }
                acc.map(|(hi, lo)| (hi * g[y], lo * g[y]))
            })
            .collect();
    }
    ext
}

fn max_row_tv(transport: &DMatrix<f64>, rows: &[usize]) -> f64 {
    let normalized: Vec<Vec<f64>> = rows
        .iter()
        .map(|&x| {
            let row = transport.row(x);
            let total = row.sum();
            row.iter().map(|v| v / total).collect()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..normalized.len() {
        for j in i + 1..normalized.len() {
            let tv: f64 = normalized[i]
                .iter()
                .zip(&normalized[j])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / 2.0;
            worst = worst.max(tv);
        }
    }
    worst
}

/// `min_{x, x', y} M(x, y) / M(x', y)` over `y` charged by some row; 0 when some
/// column is charged by one row and not another.
fn minorization(kernel: &[Vec<f64>]) -> f64 {
    let k = kernel.len();
    let mut delta: f64 = 1.0;
    for y in 0..k {
        let col: Vec<f64> = kernel.iter().map(|row| row[y]).collect();
        let hi = col.iter().cloned().fold(0.0, f64::max);
        if hi == 0.0 {
            continue;
        }
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        delta = delta.min(lo / hi);
    }
    delta
}

/// Constants of the block model induced by `schedule` (complete blocks only).
///
/// `q_{p,n}` is the spread of `Q_{p,n}(1)` over admissible block-`p` excursions,
/// where `Q_{p,n}(1)(e) = W_p(e) h_{p,n}(end e)` and `h_{p,n} = A1_{p+1} ... A1_{n-1} 1`.
/// `beta(P_{p,n})` is the largest total-variation distance between normalized rows
/// of the terminal transport from block `p` to block `n`.
pub fn constants(model: &ValidatedModel, schedule: &BlockSchedule) -> ConstantsReport {
    let ops: BlockOperators = block_operators(model, schedule);
    let m = ops.num_blocks();
    let k = model.num_states();
    let extremes: Vec<Vec<Option<(f64, f64)>>> = (0..=m)
        .map(|p| potential_extremes(model, schedule, p))
        .collect();

    let mut q = Vec::with_capacity(m + 1);
    let mut beta = Vec::with_capacity(m + 1);
    for n in 0..=m {
        let mut q_row = Vec::with_capacity(n + 1);
        let mut beta_row = Vec::with_capacity(n + 1);
        for (p, ext) in extremes.iter().enumerate().take(n + 1) {
            let admissible: Vec<usize> = (0..k).filter(|y| ext[*y].is_some()).collect();
            if p == n {
                q_row.push(1.0);
                beta_row.push(if admissible.len() > 1 { 1.0 } else { 0.0 });
                continue;
            }
            let h: DVector<f64> = ops.weighted_product(p, n - 1) * DVector::from_element(k, 1.0);
            let hi = admissible
                .iter()
                .map(|&y| ext[y].unwrap().0 * h[y])
                .fold(0.0, f64::max);
            let lo = admissible
                .iter()
                .map(|&y| ext[y].unwrap().1 * h[y])
                .fold(f64::INFINITY, f64::min);
            q_row.push(hi / lo);
            beta_row.push(max_row_tv(&ops.predicted_transport(p, n), &admissible));
        }
        q.push(q_row);
        beta.push(beta_row);
    }

    let mut sigma1 = Vec::with_capacity(m + 1);
    let mut sigma2 = Vec::with_capacity(m + 1);
    let mut sigma_sq = Vec::with_capacity(m + 1);
    let mut sigma_tilde_sq = Vec::with_capacity(m + 1);
    for n in 0..=m {
        let terms = q[n].iter().zip(&beta[n]);
        let s1: f64 = terms.clone().map(|(q, b)| q.powi(3) * b).sum();
        let s2: f64 = terms.clone().map(|(q, b)| q * b).sum();
        let ssq: f64 = terms.map(|(q, b)| (q * b).powi(2)).sum();
        sigma1.push(4.0 * s1);
        sigma2.push(2.0 * s2);
        sigma_sq.push(4.0 * ssq);
        sigma_tilde_sq.push(4.0 * s2 * s2);
    }

    let delta: Vec<f64> = (0..m)
        .map(|p| minorization(model.kernel(schedule.times[p] + 1)))
        .collect();
    let r: Vec<f64> = (0..=m)
        .map(|p| {
            let live = extremes[p].iter().flatten();
            let hi = live.clone().map(|e| e.0).fold(0.0, f64::max);
            let lo = live.map(|e| e.1).fold(f64::INFINITY, f64::min);
            hi / lo
        })
        .collect();
    let mixing_unavailable = delta.contains(&0.0);

    ConstantsReport {
        q,
        beta,
        sigma1,
        sigma2,
        sigma_sq,
        sigma_tilde_sq,
        delta,
        r,
        mixing_unavailable,
    }
}
