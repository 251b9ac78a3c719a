//! Exact first and second moments of the SINR numerator and denominator.
//!
//! Write `A = ||g_hat_k||^2`, `B^i = |g_hat_k^H g_hat_i|^2` and
//! `C = sum_m w_m ||g_hat_mk||^2` with `w_m = sum_i (beta_mi - gamma_mi)`. Then
//!
//! ```text
//! X = rho A^2,   Y = rho sum_{i != k} B^i + A + rho C
//! ```
//!
//! and every moment of `X` and `Y` up to order two is a combination of the
//! sub-expectations collected in [`SubExpectations`]. They follow from the
//! Isserlis theorem for the jointly Gaussian estimates with per-antenna
//! covariance `E[g_hat_mk conj(g_hat_mi)] = nu_mk^i`.
//!
//! Two of the published expressions are corrected here (both checked against
//! a brute-force Wick enumeration and a Monte-Carlo oracle):
//!
//! * the last term of `E[A^2 B^i]` carries `4 N^3`, not `4 N^2`;
//! * the weight inside `E[C^2]` (and the corresponding no-contamination and
//!   collocated terms) is `w_m^2 = (sum_i (beta_mi - gamma_mi))^2`.

use num_complex::Complex64;

use crate::channel::EstimationStats;
use crate::config::{PilotMode, SystemConfig};
use crate::deployment::Deployment;
use crate::error::{Error, Result};

/// `E[X], E[X^2], E[Y], E[Y^2], E[XY]` of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub ex: f64,
    pub ex2: f64,
    pub ey: f64,
    pub ey2: f64,
    pub exy: f64,
}

impl MomentSet {
    /// All entries finite and positive, and both variances non-negative
    /// (up to rounding).
    pub fn is_valid(&self) -> bool {
        let all = [self.ex, self.ex2, self.ey, self.ey2, self.exy];
        all.iter().all(|v| v.is_finite() && *v > 0.0)
            && self.ex2 >= self.ex * self.ex * (1.0 - 1e-12)
            && self.ey2 >= self.ey * self.ey * (1.0 - 1e-12)
    }

    fn checked(self) -> Result<Self> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(Error::Invalid(format!("moment set is not admissible: {self:?}")))
        }
    }
}

/// The named sub-expectations behind a [`MomentSet`]. Per-interferer vectors
/// are indexed by user; the entry of user `k` itself is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SubExpectations {
    pub a: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub c: f64,
    pub c2: f64,
    pub ac: f64,
    pub a2c: f64,
    pub b: Vec<f64>,
    pub ba: Vec<f64>,
    pub bc: Vec<f64>,
    pub a2b: Vec<f64>,
    /// `E[(sum_{i != k} B^i)^2]`.
    pub sum_b2: f64,
}

impl SubExpectations {
    /// Assembles the moments for uplink SNR `rho`.
    pub fn moments(&self, rho: f64) -> MomentSet {
        let sum_b: f64 = self.b.iter().sum();
        let sum_ba: f64 = self.ba.iter().sum();
        let sum_bc: f64 = self.bc.iter().sum();
        let sum_a2b: f64 = self.a2b.iter().sum();
        MomentSet {
            ex: rho * self.a2,
            ex2: rho * rho * self.a4,
            ey: rho * sum_b + self.a + rho * self.c,
            ey2: rho * rho * self.sum_b2
                + self.a2
                + rho * rho * self.c2
                + 2.0 * rho * sum_ba
                + 2.0 * rho * rho * sum_bc
                + 2.0 * rho * self.ac,
            exy: rho * (rho * sum_a2b + self.a3 + rho * self.a2c),
        }
    }
}

/// Neumaier-compensated accumulator.
#[derive(Default, Clone, Copy)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn get(self) -> f64 {
        self.s + self.c
    }
}

#[derive(Default, Clone, Copy)]
struct CSum {
    re: Sum,
    im: Sum,
}

impl CSum {
    fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    fn get(self) -> Complex64 {
        Complex64::new(self.re.get(), self.im.get())
    }
}

fn sum_m(m_count: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = Sum::default();
    for m in 0..m_count {
        acc.add(f(m));
    }
    acc.get()
}

fn csum_m(m_count: usize, f: impl Fn(usize) -> Complex64) -> Complex64 {
    let mut acc = CSum::default();
    for m in 0..m_count {
        acc.add(f(m));
    }
    acc.get()
}

fn check_user(es: &EstimationStats, dep: &Deployment, k: usize) -> Result<()> {
    let k_count = es.num_users();
    if k >= k_count {
        return Err(Error::Index(format!("user {k} out of range for K = {k_count}")));
    }
    if dep.beta.dim() != es.gamma.dim() {
        return Err(Error::Invalid("deployment and estimation statistics disagree in size".into()));
    }
    Ok(())
}

/// `w_m = sum_i (beta_mi - gamma_mi)`.
fn error_weights(es: &EstimationStats, dep: &Deployment) -> Vec<f64> {
    let k_count = es.num_users();
    (0..es.num_aps()).map(|m| (0..k_count).map(|i| dep.beta[[m, i]] - es.gamma[[m, i]]).sum()).collect()
}

/// Sub-expectations for arbitrary (possibly contaminated) pilots.
pub fn sub_expectations(es: &EstimationStats, dep: &Deployment, cfg: &SystemConfig, k: usize) -> Result<SubExpectations> {
    check_user(es, dep, k)?;
    let n = cfg.antennas_per_ap as f64;
    let (n2, n3) = (n * n, n * n * n);
    let m_count = es.num_aps();
    let k_count = es.num_users();
    let gk = |m: usize| es.gamma[[m, k]];
    let g = |m: usize, i: usize| es.gamma[[m, i]];
    // nu_mk^i and nu_mi^j
    let nk = |m: usize, i: usize| es.nu[[m, k, i]];
    let nij = |m: usize, i: usize, j: usize| es.nu[[m, i, j]];
    let w = error_weights(es, dep);

    let s1 = sum_m(m_count, gk);
    let s2 = sum_m(m_count, |m| gk(m).powi(2));
    let s3 = sum_m(m_count, |m| gk(m).powi(3));
    let s4 = sum_m(m_count, |m| gk(m).powi(4));

    let a = n * s1;
    let a2 = n * s2 + n2 * s1 * s1;
    let a3 = 2.0 * n * s3 + 3.0 * n2 * s2 * s1 + n3 * s1.powi(3);
    let a4 = a2 * a2 + 6.0 * n * s4 + 8.0 * n2 * s3 * s1 + 2.0 * n2 * s2 * s2 + 4.0 * n3 * s2 * s1 * s1;

    let c = n * sum_m(m_count, |m| w[m] * gk(m));
    let c2 = n * sum_m(m_count, |m| w[m] * w[m] * gk(m).powi(2)) + c * c;
    let ac = n * sum_m(m_count, |m| w[m] * gk(m).powi(2)) + a * c;
    let a2c = 2.0 * n * sum_m(m_count, |m| w[m] * gk(m).powi(3))
        + 2.0 * n2 * sum_m(m_count, |m| w[m] * gk(m).powi(2)) * s1
        + a2 * c;

    let others: Vec<usize> = (0..k_count).filter(|&i| i != k).collect();
    // S_i = sum_m nu_mk^i
    let s_nu: Vec<Complex64> = (0..k_count).map(|i| csum_m(m_count, |m| nk(m, i))).collect();

    let mut b = vec![0.0; k_count];
    let mut ba = vec![0.0; k_count];
    let mut bc = vec![0.0; k_count];
    let mut a2b = vec![0.0; k_count];
    for &i in &others {
        let si = s_nu[i];
        let eb = n * sum_m(m_count, |m| gk(m) * g(m, i)) + n2 * si.norm_sqr();
        b[i] = eb;
        ba[i] = n * sum_m(m_count, |m| gk(m).powi(2) * g(m, i))
            + n * sum_m(m_count, |m| gk(m) * nk(m, i).norm_sqr())
            + 2.0 * n2 * (csum_m(m_count, |m| gk(m) * nk(m, i)) * si.conj()).re
            + a * eb;
        bc[i] = n * sum_m(m_count, |m| w[m] * gk(m) * nk(m, i).norm_sqr())
            + n * sum_m(m_count, |m| w[m] * gk(m).powi(2) * g(m, i))
            + 2.0 * n2 * (csum_m(m_count, |m| w[m] * gk(m) * nk(m, i)) * si.conj()).re
            + c * eb;
        let gnu = csum_m(m_count, |m| gk(m) * nk(m, i));
        a2b[i] = a2 * eb
            + 4.0 * n * sum_m(m_count, |m| nk(m, i).norm_sqr() * gk(m).powi(2))
            + 2.0 * n * sum_m(m_count, |m| gk(m).powi(3) * g(m, i))
            + 2.0 * n2 * s1 * sum_m(m_count, |m| nk(m, i).norm_sqr() * gk(m))
            + 2.0 * n2 * s1 * sum_m(m_count, |m| gk(m).powi(2) * g(m, i))
            + 2.0 * n2 * gnu.norm_sqr()
            + 4.0 * n2 * (csum_m(m_count, |m| gk(m).powi(2) * nk(m, i)) * si.conj()).re
            + 4.0 * n3 * (gnu * s1 * si.conj()).re;
    }

    let mut sum_b2 = Sum::default();
    for &i in &others {
        for &j in &others {
            let (si, sj) = (s_nu[i], s_nu[j]);
            let mut t = Sum::default();
            t.add(n * sum_m(m_count, |m| gk(m).powi(2) * g(m, i) * g(m, j)));
            t.add(n * sum_m(m_count, |m| gk(m).powi(2) * nij(m, i, j).norm_sqr()));
            t.add(2.0 * n * sum_m(m_count, |m| gk(m) * g(m, j) * nk(m, i).norm_sqr()));
            t.add(2.0 * n * csum_m(m_count, |m| gk(m) * nk(m, i).conj() * nk(m, j) * nij(m, i, j).conj()).re);
            t.add(4.0 * n2 * (csum_m(m_count, |m| gk(m) * g(m, i) * nk(m, j)) * sj.conj()).re);
            t.add(4.0 * n2 * (csum_m(m_count, |m| gk(m) * nk(m, i) * nij(m, i, j)) * sj.conj()).re);
            t.add(2.0 * n3 * (csum_m(m_count, |m| nk(m, i) * nk(m, j)) * si.conj() * sj.conj()).re);
            t.add(2.0 * n3 * (csum_m(m_count, |m| gk(m) * nij(m, i, j).conj()) * si.conj() * sj).re);
            t.add(n2 * csum_m(m_count, |m| nk(m, i) * nk(m, j)).norm_sqr());
            t.add(n2 * csum_m(m_count, |m| gk(m) * nij(m, i, j)).norm_sqr());
            sum_b2.add(t.get());
        }
    }
    let total_b: f64 = b.iter().sum();
    sum_b2.add(total_b * total_b);

    Ok(SubExpectations { a, a2, a3, a4, c, c2, ac, a2c, b, ba, bc, a2b, sum_b2: sum_b2.get() })
}

/// Moments of user `k` for arbitrary pilots.
///
/// ```
/// use cellfree_outage::prelude::*;
/// use ndarray::{array, Array3};
/// use num_complex::Complex64;
///
/// // one AP, one antenna, one user: E[X] = 2 rho gamma^2
/// let dep = Deployment::from_beta(array![[1.0]], 1.0, 0.5).unwrap();
/// let mut nu = Array3::zeros((1, 1, 1));
/// nu[[0, 0, 0]] = Complex64::new(0.5, 0.0);
/// let es = EstimationStats { c: array![[0.5]], gamma: array![[0.5]], nu };
/// let cfg = SystemConfig { num_aps: 1, num_users: 1, antennas_per_ap: 1, tau_p: 1, ..Default::default() };
/// let ms = moments_general(&es, &dep, &cfg, 0).unwrap();
/// assert!((ms.ex - 2.0 * 0.5 * 0.25).abs() < 1e-15);
/// assert!((ms.ey - 0.5 * (1.0 + 0.5 * 0.5)).abs() < 1e-15);
/// ```
pub fn moments_general(es: &EstimationStats, dep: &Deployment, cfg: &SystemConfig, k: usize) -> Result<MomentSet> {
    sub_expectations(es, dep, cfg, k)?.moments(dep.rho_u).checked()
}

/// Moments of user `k` without pilot contamination, evaluated from the
/// collapsed expressions (`nu_mi^j = 0` for `i != j`, `nu_mi^i = gamma_mi`).
pub fn moments_npc(es: &EstimationStats, dep: &Deployment, cfg: &SystemConfig, k: usize) -> Result<MomentSet> {
    if cfg.pilot_mode != PilotMode::Orthogonal {
        return Err(Error::PilotMode);
    }
    check_user(es, dep, k)?;
    let n = cfg.antennas_per_ap as f64;
    let n2 = n * n;
    let rho = dep.rho_u;
    let m_count = es.num_aps();
    let k_count = es.num_users();
    let gk: Vec<f64> = (0..m_count).map(|m| es.gamma[[m, k]]).collect();
    let w = error_weights(es, dep);
    let power = |p: i32| sum_m(m_count, |m| gk[m].powi(p));
    let (s1, s2, s3, s4) = (power(1), power(2), power(3), power(4));

    // X side
    let ea2 = n * s2 + n2 * s1 * s1;
    let ea3 = 2.0 * n * s3 + 3.0 * n2 * s2 * s1 + n * n2 * s1.powi(3);
    let ea4 = ea2 * ea2 + 6.0 * n * s4 + 8.0 * n2 * s3 * s1 + 2.0 * n2 * s2 * s2 + 4.0 * n * n2 * s2 * s1 * s1;

    // per-interferer sums over APs
    let mut cross = Vec::new(); // sum_m gk gi
    let mut cross2 = Vec::new(); // sum_m gk^2 gi^2
    let mut cross_k2 = Vec::new(); // sum_m gk^2 gi
    let mut cross_k3 = Vec::new(); // sum_m gk^3 gi
    let mut cross_wk2 = Vec::new(); // sum_m w gk^2 gi
    for i in (0..k_count).filter(|&i| i != k) {
        let gi = |m: usize| es.gamma[[m, i]];
        cross.push(sum_m(m_count, |m| gk[m] * gi(m)));
        cross2.push(sum_m(m_count, |m| (gk[m] * gi(m)).powi(2)));
        cross_k2.push(sum_m(m_count, |m| gk[m] * gk[m] * gi(m)));
        cross_k3.push(sum_m(m_count, |m| gk[m].powi(3) * gi(m)));
        cross_wk2.push(sum_m(m_count, |m| w[m] * gk[m] * gk[m] * gi(m)));
    }
    let interf: Vec<f64> = (0..m_count).map(|m| (0..k_count).filter(|&i| i != k).map(|i| es.gamma[[m, i]]).sum()).collect();
    let total_cross: f64 = cross.iter().sum();
    let wg = sum_m(m_count, |m| w[m] * gk[m]);
    let wg2 = sum_m(m_count, |m| w[m] * gk[m] * gk[m]);

    let ey = n * rho * total_cross + n * s1 + n * rho * wg;

    let b_sq = cross2.iter().map(|v| n * v).sum::<f64>()
        + cross.iter().map(|v| (n * v).powi(2)).sum::<f64>()
        + n * sum_m(m_count, |m| gk[m] * gk[m] * interf[m] * interf[m])
        + (n * total_cross).powi(2);
    let c_sq = n * sum_m(m_count, |m| (w[m] * gk[m]).powi(2)) + n2 * wg * wg;
    let b_a: f64 = cross_k2.iter().zip(&cross).map(|(a, c)| n * a + n2 * s1 * c).sum();
    let a_c = n * wg2 + n2 * s1 * wg;
    let b_c: f64 = cross_wk2.iter().zip(&cross).map(|(a, c)| n * a + n2 * wg * c).sum();
    let ey2 = rho * rho * b_sq + ea2 + rho * rho * c_sq + 2.0 * rho * b_a + 2.0 * rho * a_c + 2.0 * rho * rho * b_c;

    // E[A^2 B^i] with nu collapsed: E[A^2] E[B^i] + 2N sum gk^3 gi + 2N^2 (sum gk)(sum gk^2 gi)
    let a2b: f64 = cross
        .iter()
        .zip(&cross_k3)
        .zip(&cross_k2)
        .map(|((c, k3), k2)| ea2 * n * c + 2.0 * n * k3 + 2.0 * n2 * s1 * k2)
        .sum();
    let a2c = 2.0 * n * sum_m(m_count, |m| w[m] * gk[m].powi(3)) + 2.0 * n2 * wg2 * s1 + ea2 * n * wg;
    let exy = rho * (rho * a2b + ea3 + rho * a2c);

    MomentSet { ex: rho * ea2, ex2: rho * rho * ea4, ey, ey2, exy }.checked()
}

/// Rising factorial `(a)_n = a (a + 1) ... (a + n - 1)`, `(a)_0 = 1`.
///
/// ```
/// use cellfree_outage::moments::pochhammer;
/// assert_eq!(pochhammer(4.0, 2), 20.0);
/// assert_eq!(pochhammer(8.0, 4), 7920.0);
/// ```
pub fn pochhammer(a: f64, n: u32) -> f64 {
    (0..n).map(|j| a + j as f64).product()
}

/// Moments for a collocated array of `total_antennas` antennas serving users
/// with large-scale gains `beta[i]` and estimate variances `gamma[i]`.
pub fn moments_mmimo(beta: &[f64], gamma: &[f64], total_antennas: usize, rho_u: f64, k: usize) -> Result<MomentSet> {
    if beta.len() != gamma.len() {
        return Err(Error::Invalid("beta and gamma must have one entry per user".into()));
    }
    if k >= gamma.len() {
        return Err(Error::Index(format!("user {k} out of range for K = {}", gamma.len())));
    }
    let l = total_antennas as f64;
    let gk = gamma[k];
    let interf: f64 = gamma.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, g)| g).sum();
    let interf2: f64 = gamma.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, g)| g * g).sum();
    let err: f64 = beta.iter().zip(gamma).map(|(b, g)| b - g).sum();
    let rho = rho_u;
    let bracket = rho * interf + 1.0 + rho * err;
    MomentSet {
        ex: rho * pochhammer(l, 2) * gk * gk,
        ex2: rho * rho * pochhammer(l, 4) * gk.powi(4),
        ey: l * gk * bracket,
        ey2: pochhammer(l, 2)
            * gk
            * gk
            * (rho * rho * (interf2 + interf * interf)
                + 1.0
                + rho * rho * err * err
                + 2.0 * rho * interf
                + 2.0 * rho * err
                + 2.0 * rho * rho * err * interf),
        exy: rho * pochhammer(l, 3) * gk.powi(3) * bracket,
    }
    .checked()
}
