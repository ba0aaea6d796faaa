/// Falling factorials are summed in log space beyond this order.
const LOG_FROM: usize = 20;

fn ln_falling(lo: usize, hi: usize) -> f64 {
    (lo..=hi).map(|i| (i as f64).ln()).sum()
}

/// Moment constants of the local fields:
/// `b(2k)^(2k) = (2k)! / (k! 2^k)` and
/// `b(2k+1)^(2k+1) = (2k+1)! / (k! sqrt(k + 1/2)) 2^-(k + 1/2)`.
///
/// `b(2k)^(2k)` is the `2k`-th moment of a standard normal, `(2k - 1)!!`.
pub fn khinchine_b(m: usize) -> f64 {
    assert!(m >= 1, "khinchine_b is defined for m >= 1");
    let k = m / 2;
    // (m)! / k! is the falling factorial of m with m - k factors
    let ln_falling_part = if m <= LOG_FROM {
        ((k + 1)..=m).map(|i| i as f64).product::<f64>().ln()
    } else {
        ln_falling(k + 1, m)
    };
    let ln_power = if m.is_multiple_of(2) {
        ln_falling_part - k as f64 * std::f64::consts::LN_2
    } else {
        let half = k as f64 + 0.5;
        ln_falling_part - 0.5 * half.ln() - half * std::f64::consts::LN_2
    };
    (ln_power / m as f64).exp()
}
