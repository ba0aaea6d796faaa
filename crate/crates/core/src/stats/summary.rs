use serde::{Deserialize, Serialize};

/// Two-sided 99% normal quantile.
pub const Z_TWO_SIDED_99: f64 = 2.5758;
/// One-sided 99% normal quantile.
pub const Z_ONE_SIDED_99: f64 = 2.3263;

/// A binomial frequency with its Wilson 99% interval.
///
/// With no successes the interval is `[0, upper]` from the one-sided quantile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub freq: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn wilson(successes: u64, trials: u64) -> Proportion {
    assert!(trials > 0 && successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let (lower, upper) = if successes == 0 {
        let z2 = Z_ONE_SIDED_99 * Z_ONE_SIDED_99;
        (0.0, (z2 / n) / (1.0 + z2 / n))
    } else {
        let z = Z_TWO_SIDED_99;
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = p + z2 / (2.0 * n);
        let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        (
            ((center - half) / denom).max(0.0),
            ((center + half) / denom).min(1.0),
        )
    };
    Proportion {
        successes,
        trials,
        freq: p,
        lower,
        upper,
    }
}

/// Sample moments with standard errors of the mean, variance and `L_m` norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub mean_se: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub variance_se: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let variance = m2 * n / (n - 1.0);
    // Var(s^2) ~ (mu4 - sigma^4 (n - 3) / (n - 1)) / n
    let variance_se = ((m4 - variance * variance * (n - 3.0) / (n - 1.0)) / n)
        .max(0.0)
        .sqrt();
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Moments {
        count: xs.len(),
        mean,
        mean_se: (variance / n).sqrt(),
        variance,
        variance_se,
        skewness,
        excess_kurtosis,
    }
}

/// `(mean |x|^m)^(1/m)` with a delta-method standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmNorm {
    pub m: u32,
    pub value: f64,
    pub se: f64,
}

pub fn lm_norm(xs: &[f64], m: u32) -> LmNorm {
    let powers: Vec<f64> = xs.iter().map(|x| x.abs().powi(m as i32)).collect();
    let mom = moments(&powers);
    let inv = 1.0 / m as f64;
    let value = mom.mean.powf(inv);
    let se = if mom.mean > 0.0 {
        inv * mom.mean.powf(inv - 1.0) * mom.mean_se
    } else {
        0.0
    };
    LmNorm { m, value, se }
}

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}
