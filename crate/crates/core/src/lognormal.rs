//! Two-step Log-normal moment matching.
//!
//! `X` and `Y` are each matched to a Log-normal through their first two
//! moments,
//!
//! ```text
//! mu_X = 2 ln E[X] - ln E[X^2] / 2,   sigma_X^2 = ln(E[X^2] / E[X]^2)
//! ```
//!
//! (and likewise for `Y`). The ratio `lambda = X / Y` is then Log-normal with
//! `mu = mu_X - mu_Y` and
//! `sigma^2 = sigma_X^2 + sigma_Y^2 - 2 ln(E[XY] / (E[X] E[Y]))`, the last term
//! being the log-domain covariance implied by the matched pair.
//!
//! The ergodic rate `E[log2(1 + lambda)]` becomes, after `x = ln(2^t - 1)`,
//!
//! ```text
//! R = 1 / (2 ln 2) * int erfc((x - mu) / (sigma sqrt 2)) / (1 + e^-x) dx
//! ```
//!
//! over the real line. Below `mu - 10 sigma` the erfc factor equals 2 to
//! double precision, so that tail is added in closed form as
//! `log2(1 + e^(mu - 10 sigma))`; above `mu + 10 sigma` the integrand is
//! below `1e-23` and is dropped. The middle is integrated adaptively.

use std::f64::consts::{LN_2, SQRT_2};

use crate::channel::{EstimationStats, PilotBook};
use crate::config::SystemConfig;
use crate::deployment::Deployment;
use crate::error::{Error, Result};
use crate::moments::MomentSet;
use crate::quadrature::{adaptive_simpson, gauss_kronrod_pieces, Tolerance};
use crate::special::{erfc, log2_1p_exp};

/// Parameters of the fitted `ln lambda ~ N(mu, sigma^2)` and of its two
/// components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
    pub mu_x: f64,
    pub sigma_x: f64,
    pub mu_y: f64,
    pub sigma_y: f64,
}

impl LogNormalParams {
    /// Parameters of a plain Log-normal (components left at zero spread).
    pub fn from_mu_sigma(mu: f64, sigma: f64) -> Self {
        LogNormalParams { mu, sigma, mu_x: mu, sigma_x: sigma, mu_y: 0.0, sigma_y: 0.0 }
    }
}

fn component(mean: f64, second: f64, what: &'static str) -> Result<(f64, f64)> {
    let var = (second / (mean * mean)).ln();
    if !(var > -1e-12) || !var.is_finite() {
        return Err(Error::DegenerateApproximation { what, value: var });
    }
    let var = var.max(0.0);
    Ok((2.0 * mean.ln() - 0.5 * second.ln(), var.sqrt()))
}

/// Matches `X`, `Y` and their ratio to Log-normals.
///
/// ```
/// use cellfree_outage::lognormal::fit_lognormal;
/// use cellfree_outage::moments::MomentSet;
///
/// let e = std::f64::consts::E;
/// let ms = MomentSet { ex: 1.0, ex2: e, ey: 1.0, ey2: e, exy: 1.0 };
/// let p = fit_lognormal(&ms).unwrap();
/// assert!((p.mu_x + 0.5).abs() < 1e-15 && (p.sigma_x - 1.0).abs() < 1e-15);
/// assert!((p.sigma * p.sigma - 2.0).abs() < 1e-14);
/// ```
pub fn fit_lognormal(ms: &MomentSet) -> Result<LogNormalParams> {
    let (mu_x, sigma_x) = component(ms.ex, ms.ex2, "sigma_x^2")?;
    let (mu_y, sigma_y) = component(ms.ey, ms.ey2, "sigma_y^2")?;
    let log_corr = (ms.exy / (ms.ex * ms.ey)).ln();
    let var = sigma_x * sigma_x + sigma_y * sigma_y - 2.0 * log_corr;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::DegenerateApproximation { what: "sigma^2", value: var });
    }
    Ok(LogNormalParams { mu: mu_x - mu_y, sigma: var.sqrt(), mu_x, sigma_x, mu_y, sigma_y })
}

/// `P(lambda < T)` under the fitted Log-normal.
pub fn outage_lognormal(p: &LogNormalParams, threshold: f64) -> f64 {
    if p.sigma == 0.0 {
        return if threshold > p.mu.exp() { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-(threshold.ln() - p.mu) / (p.sigma * SQRT_2))
}

/// Ergodic rate in bit/s/Hz under the fitted Log-normal.
pub fn rate_lognormal(p: &LogNormalParams) -> Result<f64> {
    let (mu, sigma) = (p.mu, p.sigma);
    if !(sigma >= 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return Err(Error::Invalid(format!("invalid Log-normal parameters mu = {mu}, sigma = {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(log2_1p_exp(mu));
    }
    let (lo, hi) = (mu - 10.0 * sigma, mu + 10.0 * sigma);
    let scale = 1.0 / (2.0 * LN_2);
    let integrand = |x: f64| scale * erfc((x - mu) / (sigma * SQRT_2)) / (1.0 + (-x).exp());
    let middle = gauss_kronrod_pieces(integrand, &[lo, mu, hi], Tolerance { abs: 5e-10, rel: 0.0, max_panels: 4000 })?;
    Ok(log2_1p_exp(lo) + middle.value)
}

/// The same rate evaluated directly in the `t` domain by adaptive Simpson;
/// an independent cross-check of [`rate_lognormal`].
pub fn rate_lognormal_t_domain(p: &LogNormalParams, abs_tol: f64) -> Result<f64> {
    let (mu, sigma) = (p.mu, p.sigma);
    if sigma == 0.0 {
        return Ok(log2_1p_exp(mu));
    }
    let t_max = log2_1p_exp(mu + 12.0 * sigma);
    let f = |t: f64| {
        let x = if t == 0.0 { f64::NEG_INFINITY } else { (t * LN_2).exp_m1().ln() };
        0.5 * erfc((x - mu) / (sigma * SQRT_2))
    };
    Ok(adaptive_simpson(f, 0.0, t_max, abs_tol, 50)?.value)
}

/// Closed-form lower and upper bounds on [`rate_lognormal`].
pub fn rate_bounds(p: &LogNormalParams) -> (f64, f64) {
    let lower = log2_1p_exp(p.mu);
    // e^-mu / (1 + e^-2mu) = 1 / (2 cosh mu)
    let gap = (0.5 * p.sigma * p.sigma).exp_m1() / (LN_2 * 2.0 * p.mu.cosh());
    (lower, lower + gap)
}

/// Use-and-then-forget rate of user `k` with MR combining, `log2(1 + SINR)`,
/// where
///
/// ```text
/// SINR = rho N^2 (sum_m gamma_mk)^2 / ( rho N sum_i sum_m gamma_mk beta_mi
///        + rho N^2 sum_{i != k} (sum_m gamma_mk beta_mi / beta_mk)^2 |phi_k^H phi_i|^2
///        + N sum_m gamma_mk )
/// ```
pub fn rate_uatf(es: &EstimationStats, dep: &Deployment, pb: &PilotBook, cfg: &SystemConfig, k: usize) -> Result<f64> {
    let (m_count, k_count) = es.gamma.dim();
    if k >= k_count {
        return Err(Error::Index(format!("user {k} out of range for K = {k_count}")));
    }
    let n = cfg.antennas_per_ap as f64;
    let rho = dep.rho_u;
    let gk: f64 = (0..m_count).map(|m| es.gamma[[m, k]]).sum();
    let mut non_coherent = 0.0;
    let mut coherent = 0.0;
    for i in 0..k_count {
        non_coherent += (0..m_count).map(|m| es.gamma[[m, k]] * dep.beta[[m, i]]).sum::<f64>();
        if i != k {
            let overlap = pb.gram[[k, i]].norm_sqr();
            if overlap > 0.0 {
                let s: f64 = (0..m_count).map(|m| es.gamma[[m, k]] * dep.beta[[m, i]] / dep.beta[[m, k]]).sum();
                coherent += s * s * overlap;
            }
        }
    }
    let sinr = rho * n * n * gk * gk / (rho * n * non_coherent + rho * n * n * coherent + n * gk);
    Ok(sinr.ln_1p() / LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_pilot_book, estimation_stats};
    use crate::config::PilotMode;
    use crate::deployment::generate_deployment;
    use std::f64::consts::E;

    #[test]
    fn uncorrelated_components_add_variances() {
        let ms = MomentSet { ex: 2.0, ex2: 9.0, ey: 3.0, ey2: 10.0, exy: 6.0 };
        let p = fit_lognormal(&ms).unwrap();
        let want = p.sigma_x.powi(2) + p.sigma_y.powi(2);
        assert!((p.sigma * p.sigma - want).abs() < 1e-14);
    }

    #[test]
    fn degenerate_fit_is_an_error() {
        // strong positive correlation makes sigma^2 negative
        let ms = MomentSet { ex: 1.0, ex2: 1.1, ey: 1.0, ey2: 1.1, exy: 1.2 };
        match fit_lognormal(&ms) {
            Err(Error::DegenerateApproximation { what, value }) => {
                assert_eq!(what, "sigma^2");
                assert!(value < 0.0);
            }
            other => panic!("{other:?}"),
        }
        let bad = MomentSet { ex: 1.0, ex2: 0.5, ey: 1.0, ey2: 2.0, exy: 1.0 };
        assert!(matches!(fit_lognormal(&bad), Err(Error::DegenerateApproximation { what: "sigma_x^2", .. })));
    }

    #[test]
    fn scaling_shifts_mu_only() {
        let ms = MomentSet { ex: 2.0, ex2: 9.0, ey: 3.0, ey2: 10.0, exy: 7.0 };
        let c = 3.7;
        let scaled = MomentSet { ex: c * ms.ex, ex2: c * c * ms.ex2, exy: c * ms.exy, ..ms };
        let (a, b) = (fit_lognormal(&ms).unwrap(), fit_lognormal(&scaled).unwrap());
        assert!((b.mu - a.mu - c.ln()).abs() < 1e-12);
        assert!((b.sigma - a.sigma).abs() < 1e-12);
    }

    #[test]
    fn outage_is_a_cdf() {
        let p = LogNormalParams::from_mu_sigma(0.3, 0.8);
        assert!((outage_lognormal(&p, 0.3f64.exp()) - 0.5).abs() < 1e-15);
        assert_eq!(outage_lognormal(&p, 0.0), 0.0);
        assert_eq!(outage_lognormal(&p, f64::INFINITY), 1.0);
        let mut prev = 0.0;
        for j in -300..300 {
            let v = outage_lognormal(&p, 10f64.powf(j as f64 / 50.0));
            assert!((0.0..=1.0).contains(&v) && v >= prev);
            prev = v;
        }
        let std = LogNormalParams::from_mu_sigma(0.0, 1.0);
        assert!((outage_lognormal(&std, E) - 0.8413447460685429).abs() < 1e-15);
    }

    #[test]
    fn rate_degenerate_sigma() {
        let p = LogNormalParams::from_mu_sigma(1.3, 0.0);
        assert_eq!(rate_lognormal(&p).unwrap(), log2_1p_exp(1.3));
        let tiny = LogNormalParams::from_mu_sigma(1.3, 1e-6);
        assert!((rate_lognormal(&tiny).unwrap() - log2_1p_exp(1.3)).abs() < 1e-9);
    }

    #[test]
    fn bound_values() {
        let (lo, hi) = rate_bounds(&LogNormalParams::from_mu_sigma(0.0, 1.0));
        assert!((lo - 1.0).abs() < 1e-15);
        assert!((hi - (1.0 + (0.5f64.exp() - 1.0) / (2.0 * LN_2))).abs() < 1e-14);
        assert!((hi - 1.4680).abs() < 1e-4);
        let (lo0, hi0) = rate_bounds(&LogNormalParams::from_mu_sigma(-2.0, 0.0));
        assert_eq!(lo0, hi0);
    }

    #[test]
    fn bounds_bracket_rate_on_grid() {
        for i in 0..10 {
            for j in 1..=10 {
                let p = LogNormalParams::from_mu_sigma(-6.0 + 1.3 * i as f64, 0.2 * j as f64);
                let r = rate_lognormal(&p).unwrap();
                let (lo, hi) = rate_bounds(&p);
                assert!(lo < r && r < hi, "{p:?}: {lo} {r} {hi}");
            }
        }
    }

    #[test]
    fn two_quadratures_agree() {
        for (mu, sigma) in [(0.0, 0.5), (-3.0, 1.5), (4.0, 0.3), (1.0, 2.0), (8.0, 1.0), (-8.0, 0.7)] {
            let p = LogNormalParams::from_mu_sigma(mu, sigma);
            let a = rate_lognormal(&p).unwrap();
            let b = rate_lognormal_t_domain(&p, 1e-11).unwrap();
            assert!(((a - b) / a).abs() < 1e-6, "mu={mu} sigma={sigma}: {a} vs {b}");
        }
    }

    #[test]
    fn uatf_single_user_collocated() {
        // K = 1: SINR = rho N^2 (M g)^2 / (rho N M g b + N M g) = rho N M g / (rho b + 1)
        let cfg = SystemConfig { num_aps: 3, num_users: 1, antennas_per_ap: 2, tau_p: 1, ..Default::default() };
        let dep = Deployment::from_beta(ndarray::Array2::from_elem((3, 1), 0.8), 1.0, 2.0).unwrap();
        let pb = build_pilot_book(&cfg, 0).unwrap();
        let es = estimation_stats(&dep, &pb, &cfg).unwrap();
        let g = es.gamma[[0, 0]];
        let sinr = 2.0 * 2.0 * 3.0 * g / (2.0 * 0.8 + 1.0);
        let got = rate_uatf(&es, &dep, &pb, &cfg, 0).unwrap();
        assert!((got - (1.0 + sinr).log2()).abs() < 1e-14);
    }

    #[test]
    fn uatf_monotone_in_uplink_power() {
        let cfg = SystemConfig { num_aps: 10, num_users: 4, antennas_per_ap: 2, tau_p: 2, pilot_mode: PilotMode::RandomContaminated, ..Default::default() };
        let dep = generate_deployment(&cfg, 3).unwrap();
        let pb = build_pilot_book(&cfg, 3).unwrap();
        let es = estimation_stats(&dep, &pb, &cfg).unwrap();
        let mut prev = 0.0;
        for e in -3..8 {
            let d = Deployment { rho_u: 10f64.powi(e), ..dep.clone() };
            let r = rate_uatf(&es, &d, &pb, &cfg, 1).unwrap();
            assert!(r >= prev);
            prev = r;
        }
    }
}
