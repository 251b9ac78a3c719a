//! Outage probability without pilot contamination.
//!
//! Conditioned on the own-channel estimate `b = g_hat_k`, the interference
//! `W = sum_{i != k} |b^H g_hat_i|^2` is a sum of independent exponentials with
//! scales `alpha_i = sum_m ||b_m||^2 gamma_mi`, and
//!
//! ```text
//! P(lambda_k < T | b) = 1 - P(W <= d) U(d),
//! d = [rho (sum_m ||b_m||^2)^2 - T sum_m (rho w_m + 1) ||b_m||^2] / (T rho)
//! ```
//!
//! with `w_m = sum_i (beta_mi - gamma_mi)`. Writing `||b_m||^2 = gamma_mk s_m`,
//! the `s_m` are independent `Gamma(N, 1)` (sums of `N` unit exponentials),
//! which gives three evaluation paths:
//!
//! * [`outage_exact_smallcase`]: the exact expectation by nested adaptive
//!   quadrature (small `M N` only),
//! * [`outage_udr`]: univariate dimension reduction over the `M N` unit
//!   exponentials `x_mn`,
//! * [`outage_mmimo_closed_form`]: the reduction evaluated in closed form for
//!   a collocated array.
//!
//! The reduction is exact when the integrand is additive in the `x_mn`. The
//! indicator `U(d)` is not, and its mean-point term `g(1, .., 1)` switches
//! off as soon as `d` at the mean point turns negative. With few antennas
//! that step is not averaged away, so for `M N` around 2 the reduction can
//! be off by tenths in a narrow threshold window when two APs contribute
//! comparably. The error shrinks as `M N` grows provided the signal is spread
//! over many antennas. A user whose gain sits mostly on one AP keeps a thin
//! lower tail however large `M` is, since every other AP is held at its mean
//! (at `M = 20`, `N = 2` one such user got `0.001` against a simulated `0.10`).
//! The step also means the per-user curve need not be monotone in `T`.
//! Averages over many users, as in the system curves, behave much better.

use ndarray::{Array2, Array3};

use crate::channel::EstimationStats;
use crate::config::{PilotMode, SystemConfig};
use crate::deployment::Deployment;
use crate::error::{Error, Result};
use crate::hypoexp::{cdf_from_scales, partial_fractions};
use crate::quadrature::{gauss_kronrod, gauss_kronrod_pieces, GaussRule, Tolerance};

/// Guard on the dimension of the exact integral.
pub const EXACT_MAX_DIMS: usize = 4;

/// Quadrature backend for the single-variable integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UdrBackend {
    /// Adaptive Gauss–Kronrod on `[0, x_max]`, integrated in `v = e^-x` so the
    /// exponential weight becomes the measure.
    Kronrod,
    /// Gauss–Legendre on the finite pieces and Gauss–Laguerre on the
    /// unbounded tail.
    Laguerre,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UdrOptions {
    pub backend: UdrBackend,
    /// Upper limit of the exponential-weight integrals.
    pub x_max: f64,
    /// Absolute tolerance per integral.
    pub abs_tol: f64,
    pub laguerre_points: usize,
}

impl Default for UdrOptions {
    fn default() -> Self {
        UdrOptions { backend: UdrBackend::Kronrod, x_max: 40.0, abs_tol: 1e-10, laguerre_points: 80 }
    }
}

/// Constants of the reduced integrand for one user. Interferer index `i`
/// runs over `interferers` (all users except the tagged one).
#[derive(Debug, Clone, PartialEq)]
pub struct UdrConstants {
    pub user: usize,
    pub interferers: Vec<usize>,
    /// `[i, m]`: `gamma_mk gamma_mi`.
    pub c1: Array2<f64>,
    /// `[i, m]`: `N sum_{m' != m} gamma_m'k gamma_m'i + (N - 1) gamma_mk gamma_mi`.
    pub c2: Array2<f64>,
    /// `[i, j, m]`: `c1[i, m] - c1[j, m]`.
    pub c3: Array3<f64>,
    /// `[i, j, m]`: `c2[i, m] - c2[j, m]`.
    pub c4: Array3<f64>,
    pub c5: Vec<f64>,
    pub c6: Vec<f64>,
    pub c7: Vec<f64>,
    pub c8: Vec<f64>,
    pub c9: Vec<f64>,
    pub c10: Vec<f64>,
    /// `N sum_m gamma_mk gamma_mi`.
    pub ci: Vec<f64>,
    /// `d` evaluated at the mean point (all `x_mn = 1`).
    pub ckt: f64,
}

impl UdrConstants {
    pub fn new(es: &EstimationStats, dep: &Deployment, antennas: usize, threshold: f64, k: usize) -> Result<Self> {
        let (m_count, k_count) = es.gamma.dim();
        if k >= k_count {
            return Err(Error::Index(format!("user {k} out of range for K = {k_count}")));
        }
        if k_count < 2 {
            return Err(Error::InvalidConfig("the interference-conditioned OP needs K >= 2".into()));
        }
        if !(threshold > 0.0) {
            return Err(Error::Invalid(format!("threshold must be positive, got {threshold}")));
        }
        let n = antennas as f64;
        let rho = dep.rho_u;
        let t = threshold;
        let interferers: Vec<usize> = (0..k_count).filter(|&i| i != k).collect();
        let q = interferers.len();
        let gk = |m: usize| es.gamma[[m, k]];

        let c1 = Array2::from_shape_fn((q, m_count), |(ii, m)| gk(m) * es.gamma[[m, interferers[ii]]]);
        let ci: Vec<f64> = (0..q).map(|ii| n * c1.row(ii).sum()).collect();
        let c2 = Array2::from_shape_fn((q, m_count), |(ii, m)| ci[ii] - c1[[ii, m]]);
        let c3 = Array3::from_shape_fn((q, q, m_count), |(a, b, m)| c1[[a, m]] - c1[[b, m]]);
        let c4 = Array3::from_shape_fn((q, q, m_count), |(a, b, m)| c2[[a, m]] - c2[[b, m]]);

        let weight: Vec<f64> = (0..m_count)
            .map(|m| rho * (0..k_count).map(|i| dep.beta[[m, i]] - es.gamma[[m, i]]).sum::<f64>() + 1.0)
            .collect();
        let total_gk: f64 = n * (0..m_count).map(gk).sum::<f64>();
        let c7: Vec<f64> = (0..m_count).map(|m| weight[m] * gk(m)).collect();
        let total_c7 = n * c7.iter().sum::<f64>();
        let c5: Vec<f64> = (0..m_count).map(|m| gk(m) * gk(m) / t).collect();
        let c6: Vec<f64> = (0..m_count).map(|m| total_gk - gk(m)).collect();
        let c8: Vec<f64> = (0..m_count).map(|m| total_c7 - c7[m]).collect();
        let c9: Vec<f64> = (0..m_count).map(|m| 2.0 * c6[m] * gk(m) / t - c7[m] / rho).collect();
        let c10: Vec<f64> = (0..m_count).map(|m| c6[m] * c6[m] / t - c8[m] / rho).collect();
        let ckt = total_gk * total_gk / t - total_c7 / rho;

        Ok(UdrConstants { user: k, interferers, c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, ci, ckt })
    }

    pub fn num_aps(&self) -> usize {
        self.c5.len()
    }

    /// Reduced integrand (without the `e^-x` weight) for AP `m`.
    pub fn g_m(&self, m: usize, x: f64, scales: &mut Vec<f64>) -> f64 {
        let d = (self.c5[m] * x + self.c9[m]) * x + self.c10[m];
        if !(d > 0.0) {
            return 0.0;
        }
        scales.clear();
        scales.extend((0..self.interferers.len()).map(|ii| x * self.c1[[ii, m]] + self.c2[[ii, m]]));
        conditional_cdf(scales, d)
    }

    /// Value of the integrand at the mean point.
    pub fn g_mean(&self) -> f64 {
        if !(self.ckt > 0.0) {
            return 0.0;
        }
        conditional_cdf(&self.ci, self.ckt)
    }

    /// Sub-intervals of `[0, x_max]` on which `c5 x^2 + c9 x + c10 > 0`.
    fn positive_pieces(&self, m: usize, x_max: f64) -> Vec<(f64, f64)> {
        positive_pieces(self.c5[m], self.c9[m], self.c10[m], 0.0, x_max)
    }
}

/// `P(W <= d)` where some scales may vanish (an interferer with no gain at
/// any AP contributes nothing to `W`).
fn conditional_cdf(scales: &[f64], d: f64) -> f64 {
    if scales.iter().all(|a| *a > 0.0) {
        return cdf_from_scales(scales, d);
    }
    let live: Vec<f64> = scales.iter().cloned().filter(|a| *a > 0.0).collect();
    if live.is_empty() {
        return if d > 0.0 { 1.0 } else { 0.0 };
    }
    cdf_from_scales(&live, d)
}

/// Sub-intervals of `[lo, hi]` where `a x^2 + b x + c > 0` (`a > 0`).
fn positive_pieces(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    let mut out = Vec::with_capacity(2);
    if !(disc > 0.0) || a <= 0.0 {
        if a > 0.0 || (a == 0.0 && b == 0.0 && c > 0.0) {
            out.push((lo, hi));
        } else if a == 0.0 && b != 0.0 {
            let r = -c / b;
            if b > 0.0 {
                out.push((r.max(lo), hi));
            } else {
                out.push((lo, r.min(hi)));
            }
            out.retain(|(p, q)| q > p);
        }
        return out;
    }
    // numerically stable roots
    let s = disc.sqrt();
    let qv = -0.5 * (b + b.signum() * s);
    let (mut r1, mut r2) = (qv / a, c / qv);
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    if r1 > lo {
        out.push((lo, r1.min(hi)));
    }
    if r2 < hi {
        out.push((r2.max(lo), hi));
    }
    out.retain(|(p, q)| q > p);
    out
}

/// Outcome of [`outage_udr_detailed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UdrOutcome {
    /// OP clamped into `[0, 1]`.
    pub value: f64,
    /// The unclamped reduction.
    pub raw: f64,
    /// Set when clamping moved the value by more than `1e-6`.
    pub clamped: bool,
}

fn require_orthogonal(cfg: &SystemConfig) -> Result<()> {
    if cfg.pilot_mode != PilotMode::Orthogonal {
        return Err(Error::PilotMode);
    }
    Ok(())
}

/// Univariate dimension reduction of the OP of user `k` at linear threshold `T`.
pub fn outage_udr(es: &EstimationStats, dep: &Deployment, cfg: &SystemConfig, threshold: f64, k: usize) -> Result<f64> {
    Ok(outage_udr_detailed(es, dep, cfg, threshold, k, &UdrOptions::default())?.value)
}

pub fn outage_udr_detailed(
    es: &EstimationStats,
    dep: &Deployment,
    cfg: &SystemConfig,
    threshold: f64,
    k: usize,
    opts: &UdrOptions,
) -> Result<UdrOutcome> {
    require_orthogonal(cfg)?;
    let consts = UdrConstants::new(es, dep, cfg.antennas_per_ap, threshold, k)?;
    udr_from_constants(&consts, cfg.antennas_per_ap, opts)
}

/// Evaluates the reduction for precomputed constants.
pub fn udr_from_constants(consts: &UdrConstants, antennas: usize, opts: &UdrOptions) -> Result<UdrOutcome> {
    let m_count = consts.num_aps();
    let n = antennas as f64;
    let mut scales = Vec::with_capacity(consts.interferers.len());
    let mut laguerre = None;
    let mut legendre = None;
    let mut sum = 0.0;
    for m in 0..m_count {
        let integral = match opts.backend {
            UdrBackend::Kronrod => {
                let mut total = 0.0;
                // int_a^b g(x) e^-x dx = int_{e^-b}^{e^-a} g(-ln v) dv
                for (a, b) in consts.positive_pieces(m, opts.x_max) {
                    let f = |v: f64| consts.g_m(m, -v.ln(), &mut scales);
                    total += gauss_kronrod(f, (-b).exp(), (-a).exp(), Tolerance::absolute(opts.abs_tol))?.value;
                }
                total
            }
            UdrBackend::Laguerre => {
                let lag = laguerre.get_or_insert_with(|| GaussRule::laguerre(opts.laguerre_points));
                let leg = legendre.get_or_insert_with(|| GaussRule::legendre(24));
                let mut total = 0.0;
                for (a, b) in consts.positive_pieces(m, f64::INFINITY) {
                    if b.is_finite() {
                        total += composite_legendre(leg, |x| consts.g_m(m, x, &mut scales) * (-x).exp(), a, b);
                    } else {
                        // int_a^inf f(x) e^-x dx = e^-a int_0^inf f(a + u) e^-u du
                        total += (-a).exp() * lag.apply(|u| consts.g_m(m, a + u, &mut scales));
                    }
                }
                total
            }
        };
        sum += integral;
    }
    let mn = (m_count * antennas) as f64;
    let raw = 1.0 - n * sum + (mn - 1.0) * consts.g_mean();
    let value = raw.clamp(0.0, 1.0);
    Ok(UdrOutcome { value, raw, clamped: (value - raw).abs() > 1e-6 })
}

fn composite_legendre<F: FnMut(f64) -> f64>(rule: &GaussRule, mut f: F, a: f64, b: f64) -> f64 {
    let panels = ((b - a) / 0.5).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    (0..panels).map(|p| rule.integrate_on(&mut f, a + p as f64 * h, a + (p + 1) as f64 * h)).sum()
}

/// Univariate dimension reduction of `E[f(x)]` for `dims` i.i.d. unit
/// exponentials: `sum_j E[f(1, .., x_j, .., 1)] - (dims - 1) f(1, .., 1)`.
/// Exact whenever `f` is additive in its arguments.
pub fn univariate_expectation<F: FnMut(&[f64]) -> f64>(dims: usize, mut f: F, x_max: f64, abs_tol: f64) -> Result<f64> {
    let mut point = vec![1.0; dims];
    let mut total = 0.0;
    for j in 0..dims {
        let r = gauss_kronrod(
            |x: f64| {
                point[j] = x;
                let v = f(&point) * (-x).exp();
                point[j] = 1.0;
                v
            },
            0.0,
            x_max,
            Tolerance::absolute(abs_tol),
        )?;
        total += r.value;
    }
    Ok(total - (dims as f64 - 1.0) * f(&point))
}

/// Exact OP of user `k` from the conditional-hypoexponential integral,
/// evaluated by nested adaptive quadrature over the `M` Gamma(N, 1)
/// variables `s_m = sum_n x_mn`. Refuses `M N > 4`.
pub fn outage_exact_smallcase(es: &EstimationStats, dep: &Deployment, cfg: &SystemConfig, threshold: f64, k: usize) -> Result<f64> {
    require_orthogonal(cfg)?;
    let (m_count, k_count) = es.gamma.dim();
    let n = cfg.antennas_per_ap;
    if m_count * n > EXACT_MAX_DIMS {
        return Err(Error::TooManyDimensions { requested: m_count * n, limit: EXACT_MAX_DIMS });
    }
    if k >= k_count {
        return Err(Error::Index(format!("user {k} out of range for K = {k_count}")));
    }
    if k_count < 2 {
        return Err(Error::InvalidConfig("the interference-conditioned OP needs K >= 2".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::Invalid(format!("threshold must be positive, got {threshold}")));
    }
    let rho = dep.rho_u;
    let interferers: Vec<usize> = (0..k_count).filter(|&i| i != k).collect();
    let ctx = ExactContext {
        gk: (0..m_count).map(|m| es.gamma[[m, k]]).collect(),
        cross: interferers.iter().map(|&i| (0..m_count).map(|m| es.gamma[[m, k]] * es.gamma[[m, i]]).collect()).collect(),
        wg: (0..m_count)
            .map(|m| (rho * (0..k_count).map(|i| dep.beta[[m, i]] - es.gamma[[m, i]]).sum::<f64>() + 1.0) * es.gamma[[m, k]])
            .collect(),
        shape: n,
        norm: (1..n).map(|j| j as f64).product::<f64>(),
        threshold,
        rho,
        s_max: 60.0 + 4.0 * n as f64,
    };
    let mut state = ExactState { lin: 0.0, noise: 0.0, alpha: vec![0.0; interferers.len()] };
    let mean = ctx.level(0, &mut state)?;
    Ok((1.0 - mean).clamp(0.0, 1.0))
}

struct ExactContext {
    gk: Vec<f64>,
    cross: Vec<Vec<f64>>,
    wg: Vec<f64>,
    shape: usize,
    norm: f64,
    threshold: f64,
    rho: f64,
    s_max: f64,
}

#[derive(Clone)]
struct ExactState {
    lin: f64,
    noise: f64,
    alpha: Vec<f64>,
}

impl ExactContext {
    fn density(&self, s: f64) -> f64 {
        s.powi(self.shape as i32 - 1) * (-s).exp() / self.norm
    }

    /// `E[P(W <= d) U(d)]` over `s_level..s_{M-1}` given the partial sums in `state`.
    fn level(&self, level: usize, state: &mut ExactState) -> Result<f64> {
        let m_count = self.gk.len();
        let last = level + 1 == m_count;
        // outer levels integrate values that are themselves only good to ~1e-12 and have kinks
        // where the inner root structure changes, so they get a looser target
        let tol = Tolerance { abs: if last { 1e-12 } else { 1e-8 }, rel: 0.0, max_panels: 4000 };
        let mut failure = None;
        let base = state.clone();
        let mut eval = |s: f64| -> f64 {
            state.lin = base.lin + self.gk[level] * s;
            state.noise = base.noise + self.wg[level] * s;
            for (a, (b, c)) in state.alpha.iter_mut().zip(base.alpha.iter().zip(&self.cross)) {
                *a = b + c[level] * s;
            }
            let inner = if last {
                let d = state.lin * state.lin / self.threshold - state.noise / self.rho;
                if d > 0.0 {
                    conditional_cdf(&state.alpha, d)
                } else {
                    0.0
                }
            } else {
                match self.level(level + 1, &mut state.clone()) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            };
            inner * self.density(s)
        };
        let value = if last {
            // d(s) = (L + g s)^2 / T - (V + w s) / rho is quadratic in s; split at its roots
            let (g, w) = (self.gk[level], self.wg[level]);
            let a = g * g / self.threshold;
            let b = 2.0 * base.lin * g / self.threshold - w / self.rho;
            let c = base.lin * base.lin / self.threshold - base.noise / self.rho;
            let mut total = 0.0;
            for (lo, hi) in positive_pieces(a, b, c, 0.0, self.s_max) {
                total += gauss_kronrod_pieces(&mut eval, &[lo, hi], tol)?.value;
            }
            total
        } else {
            gauss_kronrod(&mut eval, 0.0, self.s_max, tol)?.value
        };
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(value)
    }
}

/// Constants of the collocated closed form for the tagged user.
#[derive(Debug, Clone, PartialEq)]
pub struct MmimoConstants {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub d4: f64,
    pub d5: f64,
    pub d6: f64,
    /// Positive root of `d4 x^2 + d5 x + d6` (meaningful when `d6 < 0`).
    pub kappa: f64,
    /// `T* = rho (L - 1) gamma_k / (rho sum_i (beta_i - gamma_i) + 1)`.
    pub threshold_split: f64,
}

impl MmimoConstants {
    pub fn new(beta: &[f64], gamma: &[f64], total_antennas: usize, rho_u: f64, threshold: f64, k: usize) -> Result<Self> {
        if beta.len() != gamma.len() {
            return Err(Error::Invalid("beta and gamma must have one entry per user".into()));
        }
        if k >= gamma.len() {
            return Err(Error::Index(format!("user {k} out of range for K = {}", gamma.len())));
        }
        if gamma.len() < 2 {
            return Err(Error::InvalidConfig("the interference-conditioned OP needs K >= 2".into()));
        }
        let l1 = total_antennas as f64 - 1.0;
        let t = threshold;
        let rho = rho_u;
        let gk = gamma[k];
        let w = rho * beta.iter().zip(gamma).map(|(b, g)| b - g).sum::<f64>() + 1.0;
        let others: Vec<f64> = gamma.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, g)| *g).collect();
        let (scales, d1) = partial_fractions(&others);
        let d2: Vec<f64> = scales.iter().map(|gi| gk / (t * gi)).collect();
        let d3: Vec<f64> = scales.iter().map(|gi| l1 * gk / (t * gi) - w / (rho * gi)).collect();
        let d4 = gk * gk / t;
        let d5 = 2.0 * l1 * gk * gk / t - gk * w / rho;
        let d6 = l1 * gk * (l1 * gk / t - w / rho);
        // the roots are -(L - 1) and T w / (rho gamma_k) - (L - 1)
        let kappa = t * w / (rho * gk) - l1;
        Ok(MmimoConstants { d1, d2, d3, d4, d5, d6, kappa, threshold_split: rho * l1 * gk / w })
    }
}

/// Closed-form OP of user `k` for a collocated array of `total_antennas`
/// antennas at linear threshold `T`.
pub fn outage_mmimo_closed_form(beta: &[f64], gamma: &[f64], total_antennas: usize, rho_u: f64, threshold: f64, k: usize) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::Invalid(format!("threshold must be positive, got {threshold}")));
    }
    let c = MmimoConstants::new(beta, gamma, total_antennas, rho_u, threshold, k)?;
    let l = total_antennas as f64;
    let q = c.d1.len();
    // mean-point term: D1 [1 - e^-(D2 + D3)] U(D4 + D5 + D6)
    let mean_term = if c.d4 + c.d5 + c.d6 > 0.0 {
        (0..q).map(|i| c.d1[i] * -(-(c.d2[i] + c.d3[i])).exp_m1()).sum::<f64>()
    } else {
        0.0
    };
    let integral: f64 = if threshold <= c.threshold_split {
        (0..q).map(|i| c.d1[i] * (1.0 - (-c.d3[i]).exp() / (c.d2[i] + 1.0))).sum()
    } else {
        // e^-D3 e^-kappa (D2 + 1) = e^-kappa since D2 kappa + D3 = 0
        let ek = (-c.kappa).exp();
        (0..q).map(|i| c.d1[i] * ek * (1.0 - 1.0 / (c.d2[i] + 1.0))).sum()
    };
    let raw = 1.0 - l * integral + (l - 1.0) * mean_term;
    Ok(raw.clamp(0.0, 1.0))
}
