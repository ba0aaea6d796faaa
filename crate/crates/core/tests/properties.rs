use adaptive_smc::exact::{
    clt_variance, clt_variance_terms, constants, deterministic_times, fk_marginals, BlockSchedule,
    CriterionKind, DEFAULT_ENUMERATION_CAP,
};
use adaptive_smc::model::{FiniteModel, PathWeightSpec, ValidatedModel};
use adaptive_smc::smc::summarize_weights;
use adaptive_smc::stats::{alpha, khinchine_b, uniform_quantile, wilson};
use adaptive_smc::thresholds::ThresholdSchedule;
use proptest::prelude::*;

fn stochastic_row(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..1.0, k).prop_map(|v| {
        let total: f64 = v.iter().sum();
        v.into_iter().map(|x| x / total).collect()
    })
}

fn model_strategy(max_k: usize, max_t: usize) -> impl Strategy<Value = ValidatedModel> {
    (2..=max_k, 2..=max_t).prop_flat_map(|(k, t)| {
        (
            stochastic_row(k),
            prop::collection::vec(prop::collection::vec(stochastic_row(k), k), t),
            prop::collection::vec(prop::collection::vec(0.05f64..0.95, k), t),
        )
            .prop_map(move |(initial, kernels, potentials)| {
                FiniteModel {
                    num_states: k,
                    horizon: t,
                    initial,
                    kernels,
                    potentials,
                }
                .validate()
                .unwrap()
            })
    })
}

/// A model with a fixed schedule whose blocks all close before the horizon.
fn scheduled_model() -> impl Strategy<Value = (ValidatedModel, BlockSchedule)> {
    (model_strategy(3, 6), any::<u64>()).prop_map(|(model, bits)| {
        let t = model.horizon();
        let mut times = vec![0];
        times.extend((1..=t).filter(|s| *s == t || bits >> s & 1 == 1));
        let schedule = BlockSchedule::from_times(&model, times).unwrap();
        (model, schedule)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_weight_is_multiplicative(model in model_strategy(3, 6), seed in any::<u64>()) {
        let t = model.horizon();
        let path: Vec<usize> = (0..t).map(|i| ((seed >> (2 * i)) as usize) % model.num_states()).collect();
        let mid = 1 + (seed as usize) % (t - 1);
        let whole = model.path_weight(PathWeightSpec { start: 0, end: t }, &path).unwrap();
        let left = model.path_weight(PathWeightSpec { start: 0, end: mid }, &path[..mid]).unwrap();
        let right = model.path_weight(PathWeightSpec { start: mid, end: t }, &path[mid..]).unwrap();
        prop_assert!((whole - left * right).abs() <= 1e-15 * whole.max(1e-300) * 8.0);
        prop_assert!(whole > 0.0 && whole < 1.0);
    }

    #[test]
    fn marginals_are_probability_vectors(model in model_strategy(4, 8)) {
        let m = fk_marginals(&model);
        for row in m.updated.iter().chain(&m.predicted) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
        prop_assert!(m.log_gamma.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn weight_summaries_are_shift_invariant(
        log_w in prop::collection::vec(-6.0f64..0.0, 1..60),
        shift in -20.0f64..20.0,
    ) {
        let a = summarize_weights(&log_w);
        let shifted: Vec<f64> = log_w.iter().map(|l| l + shift).collect();
        let b = summarize_weights(&shifted);
        prop_assert!((a.cv2 - b.cv2).abs() <= 1e-9 * (1.0 + a.cv2));
        prop_assert!((a.ess - b.ess).abs() <= 1e-9 * a.ess);
        prop_assert!((b.entropy - (a.entropy - shift)).abs() <= 1e-9 * (1.0 + a.entropy.abs() + shift.abs()));
        let n = log_w.len() as f64;
        prop_assert!(a.ess >= 1.0 - 1e-12 && a.ess <= n + 1e-9);
        prop_assert!(a.cv2 >= 0.0);
        prop_assert!((a.ess - n / (1.0 + a.cv2)).abs() <= 1e-9 * n);
    }

    #[test]
    fn schedule_blocks_close_at_first_crossing(
        model in model_strategy(3, 10),
        a in 0.05f64..2.0,
        entropy in any::<bool>(),
    ) {
        let kind = if entropy { CriterionKind::Entropy } else { CriterionKind::Cv2 };
        let s = deterministic_times(&model, kind, &ThresholdSchedule::constant(a).unwrap()).unwrap();
        prop_assert!(s.times.windows(2).all(|w| w[0] < w[1]));
        for (n, curve) in s.criterion_curves.iter().enumerate() {
            let closed = n + 1 < s.times.len();
            let (last, before) = curve.split_last().unwrap();
            prop_assert!(before.iter().all(|v| *v < a));
            prop_assert_eq!(*last >= a, closed);
            if closed {
                prop_assert_eq!(s.times[n] + curve.len(), s.times[n + 1]);
            }
        }
        prop_assert_eq!(s.truncated, *s.times.last().unwrap() < model.horizon());
    }

    #[test]
    fn first_resampling_time_is_monotone_in_threshold(
        model in model_strategy(3, 10),
        a in 0.05f64..1.5,
        factor in 1.0f64..3.0,
        entropy in any::<bool>(),
    ) {
        let kind = if entropy { CriterionKind::Entropy } else { CriterionKind::Cv2 };
        let first = |a: f64| {
            let s = deterministic_times(&model, kind, &ThresholdSchedule::constant(a).unwrap()).unwrap();
            s.times.get(1).copied().unwrap_or(usize::MAX)
        };
        prop_assert!(first(a) <= first(a * factor));
    }

    #[test]
    fn concentration_constants_are_ordered((model, schedule) in scheduled_model()) {
        let c = constants(&model, &schedule);
        for n in 0..=c.num_blocks() {
            for p in 0..=n {
                prop_assert!(c.q(p, n) >= 1.0 - 1e-12);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&c.beta(p, n)));
            }
            prop_assert!(c.sigma_sq[n] <= c.sigma1[n] * (1.0 + 1e-12));
            prop_assert!(c.sigma_sq[n] <= c.sigma_tilde_sq[n] * (1.0 + 1e-12));
            prop_assert!(c.sigma2[n] <= c.sigma1[n] * (1.0 + 1e-12) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn clt_variance_is_a_variance(
        (model, schedule) in scheduled_model(),
        f in prop::collection::vec(-1.0f64..1.0, 4),
        shift in -3.0f64..3.0,
        scale in -2.0f64..2.0,
    ) {
        let k = model.num_states();
        let f = &f[..k];
        let n = schedule.num_blocks();
        let terms = clt_variance_terms(&model, &schedule, f, n, DEFAULT_ENUMERATION_CAP).unwrap();
        prop_assert!(terms.terms.iter().all(|t| *t >= -1e-12));
        let base = terms.total();
        let moved: Vec<f64> = f.iter().map(|x| x + shift).collect();
        let scaled: Vec<f64> = f.iter().map(|x| x * scale).collect();
        let v_moved = clt_variance(&model, &schedule, &moved, n, DEFAULT_ENUMERATION_CAP).unwrap();
        let v_scaled = clt_variance(&model, &schedule, &scaled, n, DEFAULT_ENUMERATION_CAP).unwrap();
        prop_assert!((v_moved - base).abs() <= 1e-9 * (1.0 + base));
        prop_assert!((v_scaled - scale * scale * base).abs() <= 1e-9 * (1.0 + base));
    }

    #[test]
    fn alpha_in_unit_interval_and_non_increasing(
        eps in 1e-4f64..1.0,
        step in 0.0f64..1.0,
        sigma_sq in 0.1f64..50.0,
        extra in 0.0f64..100.0,
    ) {
        let sigma1 = sigma_sq + extra;
        let a = alpha(eps, sigma_sq, sigma1);
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(alpha(eps + step, sigma_sq, sigma1) <= a);
    }

    #[test]
    fn uniform_quantile_decreases(
        rho in 0.001f64..0.5,
        n in 10usize..100_000,
        delta in 0.05f64..1.0,
        r in 1.0f64..5.0,
    ) {
        let q = uniform_quantile(rho, n, delta, r, 1.0, 1);
        prop_assert!(uniform_quantile(rho, n + 1, delta, r, 1.0, 1) < q);
        prop_assert!(uniform_quantile(rho * 1.5, n, delta, r, 1.0, 1) < q);
        let ratio = q / uniform_quantile(rho, 4 * n, delta, r, 1.0, 1);
        prop_assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_frequency(k in 0u64..500, extra in 0u64..500) {
        let n = k + extra + 1;
        let p = wilson(k, n);
        prop_assert!(0.0 <= p.lower && p.lower <= p.freq && p.freq <= p.upper && p.upper <= 1.0);
    }
}

#[test]
fn khinchine_even_powers_are_gaussian_moments() {
    for m in 1..=8usize {
        let double_factorial: f64 = (1..2 * m).step_by(2).map(|x| x as f64).product();
        let value = khinchine_b(2 * m).powi(2 * m as i32);
        assert!((value / double_factorial - 1.0).abs() < 1e-10, "m = {m}");
    }
}
