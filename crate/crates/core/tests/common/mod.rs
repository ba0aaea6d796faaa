//! Independent oracles for the integration tests.
//!
//! Nothing here calls into the exact module: every quantity is a plain sum over
//! every path prefix of the chain.
#![allow(dead_code)]

use std::path::PathBuf;

use adaptive_smc::model::{FiniteModel, ValidatedModel};

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("models")
}

pub fn load_model(name: &str) -> ValidatedModel {
    FiniteModel::load(models_dir().join(name)).expect("bundled model loads")
}

/// The two-state model used throughout: sticky kernel, potentials 0.3 and 0.7.
pub fn reference(horizon: usize) -> ValidatedModel {
    FiniteModel::homogeneous(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        vec![0.3, 0.7],
        horizon,
    )
    .validate()
    .unwrap()
}

/// Neumaier-compensated running sum. Plain summation over ~10^6 path terms drifts
/// by more than the 1e-12 agreement being tested.
#[derive(Clone, Copy, Default)]
struct Sum {
    total: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.total + x;
        if self.total.abs() >= x.abs() {
            self.carry += (self.total - t) + x;
        } else {
            self.carry += (x - t) + self.total;
        }
        self.total = t;
    }

    fn value(self) -> f64 {
        self.total + self.carry
    }
}

/// Every path-space quantity the oracle reports, by exhaustive enumeration.
///
/// `cv2[start][s]` and `entropy[start][s]` are the limiting criteria of a block
/// opened at `start`, under the full path measure weighted through `start`.
pub struct BruteForce {
    pub updated: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub cv2: Vec<Vec<f64>>,
    pub entropy: Vec<Vec<f64>>,
}

impl BruteForce {
    /// Depth-first over every path prefix `x_0 .. x_s`. Since kernel rows sum to
    /// one, summing a time-`s` quantity over prefixes equals summing it over full paths.
    pub fn new(model: &ValidatedModel) -> Self {
        let k = model.num_states();
        let t = model.horizon();
        let mut acc = Accumulators {
            updated: vec![vec![Sum::default(); k]; t + 1],
            predicted: vec![vec![Sum::default(); k]; t + 1],
            m0: vec![Sum::default(); t + 1],
            m1: vec![vec![Sum::default(); t + 1]; t + 1],
            m2: vec![vec![Sum::default(); t + 1]; t + 1],
            ml: vec![vec![Sum::default(); t + 1]; t + 1],
        };
        let mut g = vec![1.0; t + 1];
        let mut prefix = vec![1.0; t + 1];
        for (x0, p0) in model.initial().iter().enumerate() {
            if *p0 > 0.0 {
                visit(model, &mut acc, &mut g, &mut prefix, 0, x0, *p0);
            }
        }
        let collapse = |rows: Vec<Vec<Sum>>| -> Vec<Vec<f64>> {
            rows.into_iter()
                .map(|r| r.into_iter().map(Sum::value).collect())
                .collect()
        };
        let (mut updated, mut predicted) = (collapse(acc.updated), collapse(acc.predicted));
        let (m1, m2, ml) = (collapse(acc.m1), collapse(acc.m2), collapse(acc.ml));
        let m0: Vec<f64> = acc.m0.into_iter().map(Sum::value).collect();
        let gamma = (0..=t).map(|s| updated[s].iter().sum()).collect();
        for row in updated.iter_mut().chain(predicted.iter_mut()) {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
        let mut cv2 = vec![vec![0.0; t + 1]; t + 1];
        let mut entropy = vec![vec![0.0; t + 1]; t + 1];
        for start in 0..=t {
            for s in start + 1..=t {
                let e1 = m1[start][s] / m0[start];
                let e2 = m2[start][s] / m0[start];
                cv2[start][s] = e2 / (e1 * e1) - 1.0;
                entropy[start][s] = -ml[start][s] / m0[start];
            }
        }
        Self {
            updated,
            predicted,
            gamma,
            cv2,
            entropy,
        }
    }

    pub fn criterion(&self, entropy: bool, start: usize, s: usize) -> f64 {
        if entropy {
            self.entropy[start][s]
        } else {
            self.cv2[start][s]
        }
    }

    /// Resampling times and `epsilon_m` by a direct scan of the criterion table.
    /// The returned flag is set when the last block ran into the horizon.
    pub fn schedule(
        &self,
        entropy: bool,
        thresholds: impl Fn(usize) -> f64,
    ) -> (Vec<usize>, bool, f64) {
        let t = self.gamma.len() - 1;
        let mut times = vec![0];
        let mut eps = f64::INFINITY;
        let mut n = 0;
        loop {
            let start = *times.last().unwrap();
            if start == t {
                return (times, false, eps);
            }
            let a = thresholds(n);
            eps = eps.min(a);
            let hit = (start + 1..=t).find(|&s| {
                let v = self.criterion(entropy, start, s);
                eps = eps.min((v - a).abs());
                v >= a
            });
            match hit {
                Some(s) => times.push(s),
                None => return (times, true, eps),
            }
            n += 1;
        }
    }
}

/// Sums of `P(prefix) G_1..G_start W^j` and `P(prefix) G_1..G_start log W` with
/// `W = G_{start+1} .. G_s`, indexed `[start][s]`.
struct Accumulators {
    updated: Vec<Vec<Sum>>,
    predicted: Vec<Vec<Sum>>,
    m0: Vec<Sum>,
    m1: Vec<Vec<Sum>>,
    m2: Vec<Vec<Sum>>,
    ml: Vec<Vec<Sum>>,
}

/// Accounts for the prefix ending in `x` at time `s` with probability `prob`,
/// then extends it by one step. `g[1..=s]` and `prefix[0..=s]` describe the prefix.
fn visit(
    model: &ValidatedModel,
    acc: &mut Accumulators,
    g: &mut [f64],
    prefix: &mut [f64],
    s: usize,
    x: usize,
    prob: f64,
) {
    acc.updated[s][x].add(prob * prefix[s]);
    acc.predicted[s][x].add(prob * if s == 0 { 1.0 } else { prefix[s - 1] });
    acc.m0[s].add(prob * prefix[s]);
    let (mut w, mut log_w) = (1.0, 0.0);
    for start in (0..s).rev() {
        w *= g[start + 1];
        log_w += g[start + 1].ln();
        let base = prob * prefix[start];
        acc.m1[start][s].add(base * w);
        acc.m2[start][s].add(base * w * w);
        acc.ml[start][s].add(base * log_w);
    }
    if s == model.horizon() {
        return;
    }
    let raw = model.raw();
    for (y, p) in raw.kernels[s][x].iter().enumerate() {
        if *p > 0.0 {
            g[s + 1] = raw.potentials[s][y];
            prefix[s + 1] = prefix[s] * g[s + 1];
            visit(model, acc, g, prefix, s + 1, y, prob * p);
        }
    }
}

/// Deterministic pseudo-random stochastic model, for corpora of test models.
pub fn scrambled_model(k: usize, horizon: usize, salt: u64) -> ValidatedModel {
    let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let row = |next: &mut dyn FnMut() -> f64| {
        let v: Vec<f64> = (0..k).map(|_| 0.05 + next()).collect();
        let total: f64 = v.iter().sum();
        v.into_iter().map(|x| x / total).collect::<Vec<f64>>()
    };
    let initial = row(&mut next);
    let kernels = (0..horizon)
        .map(|_| (0..k).map(|_| row(&mut next)).collect())
        .collect();
    let potentials = (0..horizon)
        .map(|_| (0..k).map(|_| 0.05 + 0.9 * next()).collect())
        .collect();
    FiniteModel {
        num_states: k,
        horizon,
        initial,
        kernels,
        potentials,
    }
    .validate()
    .unwrap()
}

/// Checks marginals, criteria at every block start, the deterministic schedule
/// and `epsilon_m` against [`BruteForce`]. Returns the largest criterion error.
pub fn oracle_agreement(
    model: &ValidatedModel,
    bf: &BruteForce,
    kind: adaptive_smc::exact::CriterionKind,
    thresholds: &adaptive_smc::thresholds::ThresholdSchedule,
    tol: f64,
) -> Result<f64, String> {
    use adaptive_smc::exact::{
        deterministic_times, epsilon_m, fk_marginals, limiting_cv2, limiting_entropy, CriterionKind,
    };
    let entropy = kind == CriterionKind::Entropy;
    let exact = fk_marginals(model);
    let t = model.horizon();
    let mut worst: f64 = 0.0;
    for s in 0..=t {
        for x in 0..model.num_states() {
            for (name, a, b) in [
                ("updated", exact.updated[s][x], bf.updated[s][x]),
                ("predicted", exact.predicted[s][x], bf.predicted[s][x]),
            ] {
                if (a - b).abs() > tol {
                    return Err(format!("{name} marginal at s={s}, x={x}: {a} vs {b}"));
                }
            }
        }
        if (exact.gamma(s) / bf.gamma[s] - 1.0).abs() > tol {
            return Err(format!(
                "gamma at s={s}: {} vs {}",
                exact.gamma(s),
                bf.gamma[s]
            ));
        }
    }
    for start in 0..t {
        for s in start + 1..=t {
            let eta = &exact.updated[start];
            let cv2 = limiting_cv2(model, start, eta, s).map_err(|e| e.to_string())?;
            let ent = limiting_entropy(model, start, eta, s).map_err(|e| e.to_string())?;
            let e1 = (cv2 - bf.cv2[start][s]).abs();
            let e2 = (ent - bf.entropy[start][s]).abs();
            worst = worst.max(e1).max(e2);
            if e1 > tol || e2 > tol {
                return Err(format!(
                    "criteria for block opened at {start}, s={s}: cv2 {cv2} vs {}, entropy {ent} vs {}",
                    bf.cv2[start][s], bf.entropy[start][s]
                ));
            }
        }
    }
    let schedule = deterministic_times(model, kind, thresholds).map_err(|e| e.to_string())?;
    let (times, truncated, eps) = bf.schedule(entropy, |n| thresholds.get(n));
    if schedule.times != times || schedule.truncated != truncated {
        return Err(format!(
            "times {:?} (truncated {}) vs brute force {times:?} (truncated {truncated})",
            schedule.times, schedule.truncated
        ));
    }
    for (n, curve) in schedule.criterion_curves.iter().enumerate() {
        let start = schedule.times[n];
        for (i, v) in curve.iter().enumerate() {
            let want = bf.criterion(entropy, start, start + i + 1);
            if (v - want).abs() > tol {
                return Err(format!(
                    "curve of block {n} at s={}: {v} vs {want}",
                    start + i + 1
                ));
            }
        }
    }
    let got = epsilon_m(&schedule).map_err(|e| e.to_string())?;
    if (got - eps).abs() > tol {
        return Err(format!("epsilon_m {got} vs brute force {eps}"));
    }
    Ok(worst)
}
