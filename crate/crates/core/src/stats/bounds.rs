//! Closed-form concentration bounds on `P(|[eta_n^N - eta_n](f)| >= eps)` for
//! `osc(f) <= 1`.

/// `6 exp(-N eps^2 / (8 sigma1))`, uncapped.
pub fn bound_main(eps: f64, n: usize, sigma1: f64) -> f64 {
    6.0 * (-(n as f64) * eps * eps / (8.0 * sigma1)).exp()
}

/// `bound_main` read as a probability.
pub fn bound_main_capped(eps: f64, n: usize, sigma1: f64) -> f64 {
    bound_main(eps, n, sigma1).min(1.0)
}

/// `alpha(eps) = (sigma_sq / (3 sigma1 eps)) (sqrt(1 + 6 sigma1 eps / sigma_sq) - 1)`,
/// evaluated as `2 / (1 + sqrt(1 + 6 sigma1 eps / sigma_sq))`, which has no
/// cancellation as `eps -> 0`.
pub fn alpha(eps: f64, sigma_sq: f64, sigma1: f64) -> f64 {
    2.0 / (1.0 + (1.0 + 6.0 * sigma1 * eps / sigma_sq).sqrt())
}

/// `6 exp(-N eps^2 alpha(eps)^2 / (2 sigma_sq))`, uncapped.
///
/// The exponent is written as `2 N eps^2 / (sigma + sqrt(sigma_sq + 6 sigma1 eps))^2`,
/// which is the same quantity and stays finite when `sigma_sq = 0`.
pub fn bound_improved(eps: f64, n: usize, sigma_sq: f64, sigma1: f64) -> f64 {
    let root = sigma_sq.sqrt() + (sigma_sq + 6.0 * sigma1 * eps).sqrt();
    6.0 * (-2.0 * n as f64 * eps * eps / (root * root)).exp()
}

/// `(1 + eps sqrt(N)) exp(-N eps^2 / (2 sigma_tilde_sq))`.
pub fn bound_fk743(eps: f64, n: usize, sigma_tilde_sq: f64) -> f64 {
    let nf = n as f64;
    (1.0 + eps * nf.sqrt()) * (-nf * eps * eps / (2.0 * sigma_tilde_sq)).exp()
}

/// Radius that `sup_n |[eta_n^N - eta_n](f)|`-type errors stay under with
/// probability at least `1 - rho`: `(4 r_hi / delta^2) sqrt(2 m r_lo r_hi / (N delta) log(6 / rho))`.
pub fn uniform_quantile(rho: f64, n: usize, delta: f64, r_hi: f64, r_lo: f64, m: usize) -> f64 {
    4.0 * r_hi / (delta * delta)
        * ((2.0 * m as f64 * r_lo * r_hi) / (n as f64 * delta) * (6.0 / rho).ln()).sqrt()
}
