//! Pilots, MMSE channel estimation and the statistics derived from it.
//!
//! During training every user sends `sqrt(tau_p) * phi_k`. AP `m` projects its
//! received pilot matrix on `phi_k` and scales by
//!
//! ```text
//! c_mk = sqrt(tau_p rho_p) beta_mk / (tau_p rho_p sum_i beta_mi |phi_k^H phi_i|^2 + 1)
//! ```
//!
//! giving `g_hat_mk ~ CN(0, gamma_mk I_N)` with `gamma_mk = sqrt(tau_p rho_p) beta_mk c_mk`.
//! With non-orthogonal pilots the estimates of different users are correlated;
//! per antenna `E[g_hat_mk conj(g_hat_mi)] = nu_mk^i = c_mk c_mi phi_i^H C_y phi_k` with
//! `C_y = tau_p rho_p sum_j beta_mj phi_j phi_j^H + I`.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::config::{PilotMode, SystemConfig};
use crate::deployment::Deployment;
use crate::error::{Error, Result};
use crate::rng::{complex_normal, rng_from_seed, SimRng};

/// Unit-norm pilot sequences, one row per user, and their Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    /// `K x tau_p`; row `k` is `phi_k`.
    pub phi: Array2<Complex64>,
    /// `K x K`; `gram[[k, i]] = phi_k^H phi_i`.
    pub gram: Array2<Complex64>,
}

impl PilotBook {
    pub fn num_users(&self) -> usize {
        self.phi.nrows()
    }

    pub fn tau_p(&self) -> usize {
        self.phi.ncols()
    }

    /// Builds the book from explicit pilot rows; rows are normalised and the Gram
    /// matrix is computed from them.
    pub fn from_rows(mut phi: Array2<Complex64>) -> Result<Self> {
        for mut row in phi.rows_mut() {
            let norm = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::Invalid("pilot rows must be non-zero".into()));
            }
            row.mapv_inplace(|z| z / norm);
        }
        let k = phi.nrows();
        let gram = Array2::from_shape_fn((k, k), |(a, b)| {
            phi.row(a).iter().zip(phi.row(b)).map(|(x, y)| x.conj() * y).sum()
        });
        Ok(PilotBook { phi, gram })
    }
}

/// Pilot book for `cfg.pilot_mode`.
///
/// Orthogonal mode uses rows of the identity (the Gram matrix is the identity
/// by construction). Contaminated mode draws each pilot uniformly on the unit
/// sphere of `C^tau_p` (a normalised complex Gaussian vector).
pub fn build_pilot_book(cfg: &SystemConfig, seed: u64) -> Result<PilotBook> {
    let (k, tau) = (cfg.num_users, cfg.tau_p);
    match cfg.pilot_mode {
        PilotMode::Orthogonal => {
            if tau < k {
                return Err(Error::InvalidConfig(format!("orthogonal pilots need tau_p >= K ({tau} < {k})")));
            }
            let phi = Array2::from_shape_fn((k, tau), |(a, t)| if a == t { Complex64::ONE } else { Complex64::ZERO });
            Ok(PilotBook { phi, gram: Array2::from_shape_fn((k, k), |(a, b)| if a == b { Complex64::ONE } else { Complex64::ZERO }) })
        }
        PilotMode::RandomContaminated => {
            let mut rng = rng_from_seed(seed);
            let phi = Array2::from_shape_fn((k, tau), |_| complex_normal(&mut rng, 1.0));
            PilotBook::from_rows(phi)
        }
    }
}

/// Per-deployment MMSE statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStats {
    /// `M x K` MMSE scaling `c_mk`.
    pub c: Array2<f64>,
    /// `M x K` estimate variance per antenna `gamma_mk`.
    pub gamma: Array2<f64>,
    /// `M x K x K`; `nu[[m, k, i]] = nu_mk^i = E[g_hat_mk,n conj(g_hat_mi,n)]`.
    pub nu: Array3<Complex64>,
}

impl EstimationStats {
    pub fn num_aps(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.gamma.ncols()
    }
}

pub fn estimation_stats(dep: &Deployment, pb: &PilotBook, cfg: &SystemConfig) -> Result<EstimationStats> {
    let (m_count, k_count) = dep.beta.dim();
    if pb.num_users() != k_count {
        return Err(Error::Invalid(format!("pilot book has {} users, deployment {k_count}", pb.num_users())));
    }
    let _ = cfg;
    let tau = pb.tau_p() as f64;
    let load = tau * dep.rho_p;
    let root = load.sqrt();
    let gram = &pb.gram;

    let mut c = Array2::<f64>::zeros((m_count, k_count));
    let mut gamma = Array2::<f64>::zeros((m_count, k_count));
    let mut nu = Array3::<Complex64>::zeros((m_count, k_count, k_count));

    for m in 0..m_count {
        let beta = dep.beta.row(m);
        for k in 0..k_count {
            let received: f64 = (0..k_count).map(|i| beta[i] * gram[[k, i]].norm_sqr()).sum();
            c[[m, k]] = root * beta[k] / (load * received + 1.0);
            gamma[[m, k]] = root * beta[k] * c[[m, k]];
        }
        // phi_i^H C_y phi_k = load * sum_j beta_j (phi_i^H phi_j)(phi_j^H phi_k) + phi_i^H phi_k
        for k in 0..k_count {
            for i in 0..k_count {
                let mut quad = gram[[i, k]];
                for j in 0..k_count {
                    quad += load * beta[j] * gram[[i, j]] * gram[[j, k]];
                }
                nu[[m, k, i]] = c[[m, k]] * c[[m, i]] * quad;
            }
            // exact on the diagonal: c^2 (load * received + 1) = gamma
            nu[[m, k, k]] = Complex64::new(gamma[[m, k]], 0.0);
        }
    }
    Ok(EstimationStats { c, gamma, nu })
}

/// One small-scale fading draw and its estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `M x K x N` true channels `g_mk`.
    pub g: Array3<Complex64>,
    /// `M x K x N` MMSE estimates `g_hat_mk`.
    pub g_hat: Array3<Complex64>,
    /// `M x K` estimation-error variances `beta_mk - gamma_mk`.
    pub lambda_err: Array2<f64>,
}

impl ChannelRealization {
    pub fn zeros(m: usize, k: usize, n: usize) -> Self {
        ChannelRealization {
            g: Array3::zeros((m, k, n)),
            g_hat: Array3::zeros((m, k, n)),
            lambda_err: Array2::zeros((m, k)),
        }
    }
}

/// Draws channel realizations for a fixed deployment through the full
/// training pipeline: `g_mk ~ CN(0, beta_mk I)`, pilot noise `W ~ CN(0, 1)`,
/// `Y = sqrt(tau_p rho_p) sum_k g_mk phi_k^H + W`, `g_hat_mk = c_mk Y phi_k`.
///
/// Reuses its scratch buffers across draws.
pub struct ChannelSampler<'a> {
    dep: &'a Deployment,
    es: &'a EstimationStats,
    pb: &'a PilotBook,
    antennas: usize,
    pilot_gain: f64,
    received: Array2<Complex64>,
}

impl<'a> ChannelSampler<'a> {
    pub fn new(dep: &'a Deployment, es: &'a EstimationStats, pb: &'a PilotBook, antennas: usize) -> Result<Self> {
        let (m, k) = dep.beta.dim();
        if es.gamma.dim() != (m, k) || pb.num_users() != k {
            return Err(Error::Invalid("deployment, estimation statistics and pilot book disagree in size".into()));
        }
        if antennas == 0 {
            return Err(Error::Invalid("antennas per AP must be >= 1".into()));
        }
        Ok(ChannelSampler {
            dep,
            es,
            pb,
            antennas,
            pilot_gain: (pb.tau_p() as f64 * dep.rho_p).sqrt(),
            received: Array2::zeros((antennas, pb.tau_p())),
        })
    }

    pub fn empty_realization(&self) -> ChannelRealization {
        let (m, k) = self.dep.beta.dim();
        let mut r = ChannelRealization::zeros(m, k, self.antennas);
        r.lambda_err = &self.dep.beta - &self.es.gamma;
        r
    }

    pub fn draw(&mut self, rng: &mut SimRng) -> ChannelRealization {
        let mut r = self.empty_realization();
        self.draw_into(rng, &mut r);
        r
    }

    /// Overwrites `g` and `g_hat` of `out` (which must come from
    /// [`ChannelSampler::empty_realization`]).
    pub fn draw_into(&mut self, rng: &mut SimRng, out: &mut ChannelRealization) {
        let (m_count, k_count) = self.dep.beta.dim();
        let n_count = self.antennas;
        let tau = self.pb.tau_p();
        let phi = &self.pb.phi;
        for m in 0..m_count {
            for k in 0..k_count {
                let var = self.dep.beta[[m, k]];
                for n in 0..n_count {
                    out.g[[m, k, n]] = complex_normal(rng, var);
                }
            }
            for n in 0..n_count {
                for t in 0..tau {
                    let mut y = complex_normal(rng, 1.0);
                    for k in 0..k_count {
                        y += self.pilot_gain * out.g[[m, k, n]] * phi[[k, t]].conj();
                    }
                    self.received[[n, t]] = y;
                }
            }
            for k in 0..k_count {
                let c = self.es.c[[m, k]];
                for n in 0..n_count {
                    let mut proj = Complex64::ZERO;
                    for t in 0..tau {
                        proj += self.received[[n, t]] * phi[[k, t]];
                    }
                    out.g_hat[[m, k, n]] = c * proj;
                }
            }
        }
    }
}

/// Single channel draw for `(dep, es, pb)` from `seed`.
pub fn draw_channels(
    dep: &Deployment,
    es: &EstimationStats,
    pb: &PilotBook,
    cfg: &SystemConfig,
    seed: u64,
) -> Result<ChannelRealization> {
    let mut sampler = ChannelSampler::new(dep, es, pb, cfg.antennas_per_ap)?;
    Ok(sampler.draw(&mut rng_from_seed(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deployment::generate_deployment;
    use ndarray::array;

    fn small_cfg(mode: PilotMode, m: usize, k: usize, tau: usize, n: usize) -> SystemConfig {
        SystemConfig {
            num_aps: m,
            num_users: k,
            tau_p: tau,
            antennas_per_ap: n,
            pilot_mode: mode,
            area_side_km: 0.3,
            ..Default::default()
        }
    }

    #[test]
    fn orthogonal_book_is_identity() {
        let cfg = small_cfg(PilotMode::Orthogonal, 2, 4, 4, 1);
        let pb = build_pilot_book(&cfg, 0).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_eq!(pb.gram[[a, b]], Complex64::new(expected, 0.0));
            }
        }
    }

    #[test]
    fn orthogonal_book_rejects_short_pilots() {
        let mut cfg = small_cfg(PilotMode::Orthogonal, 2, 4, 4, 1);
        cfg.tau_p = 3;
        assert!(matches!(build_pilot_book(&cfg, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn scalar_random_pilots_fully_collide() {
        let cfg = small_cfg(PilotMode::RandomContaminated, 2, 2, 1, 1);
        let pb = build_pilot_book(&cfg, 11).unwrap();
        assert!((pb.gram[[0, 1]].norm() - 1.0).abs() < 1e-12);
        for row in pb.phi.rows() {
            let norm: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_pilot_overlap_has_mean_one_over_tau() {
        let tau = 5;
        let cfg = small_cfg(PilotMode::RandomContaminated, 1, 2, tau, 1);
        let draws = 40_000;
        let samples: Vec<f64> =
            (0..draws).map(|s| build_pilot_book(&cfg, s).unwrap().gram[[0, 1]].norm_sqr()).collect();
        let mean = samples.iter().sum::<f64>() / draws as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - 1.0 / tau as f64).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn unit_load_hand_case() {
        // tau_p rho_p = 1, beta = 1 -> c = 1/2, gamma = 1/2
        let dep = Deployment::from_beta(array![[1.0]], 1.0, 1.0).unwrap();
        let cfg = small_cfg(PilotMode::Orthogonal, 1, 1, 1, 1);
        let pb = build_pilot_book(&cfg, 0).unwrap();
        let es = estimation_stats(&dep, &pb, &cfg).unwrap();
        assert!((es.c[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((es.gamma[[0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_csi_limit() {
        let dep = Deployment::from_beta(array![[0.3, 2.0], [1.5, 0.7]], 1e8, 1.0).unwrap();
        let cfg = small_cfg(PilotMode::Orthogonal, 2, 2, 2, 1);
        let pb = build_pilot_book(&cfg, 0).unwrap();
        let es = estimation_stats(&dep, &pb, &cfg).unwrap();
        for (g, b) in es.gamma.iter().zip(dep.beta.iter()) {
            assert!((g - b).abs() / b < 1e-6);
        }
    }

    #[test]
    fn orthogonal_stats_collapse() {
        let cfg = small_cfg(PilotMode::Orthogonal, 3, 3, 4, 2);
        let dep = generate_deployment(&cfg, 1).unwrap();
        let pb = build_pilot_book(&cfg, 1).unwrap();
        let es = estimation_stats(&dep, &pb, &cfg).unwrap();
        let load = cfg.tau_p as f64 * dep.rho_p;
        for m in 0..3 {
            for k in 0..3 {
                let b = dep.beta[[m, k]];
                let expected = load * b * b / (load * b + 1.0);
                assert!((es.gamma[[m, k]] - expected).abs() <= 1e-12 * expected);
                assert!(es.gamma[[m, k]] > 0.0 && es.gamma[[m, k]] < b);
                for i in 0..3 {
                    let nu = es.nu[[m, k, i]];
                    if i == k {
                        assert_eq!(nu, Complex64::new(es.gamma[[m, k]], 0.0));
                    } else {
                        assert!(nu.norm() <= 1e-12 * es.gamma[[m, k]]);
                    }
                }
            }
        }
    }

    #[test]
    fn nu_matches_explicit_matrix_form() {
        let cfg = small_cfg(PilotMode::RandomContaminated, 2, 2, 2, 1);
        let dep = generate_deployment(&cfg, 7).unwrap();
        let pb = build_pilot_book(&cfg, 7).unwrap();
        let es = estimation_stats(&dep, &pb, &cfg).unwrap();
        let tau = cfg.tau_p;
        let load = tau as f64 * dep.rho_p;
        for m in 0..2 {
            // C_y = load * sum_j beta_mj phi_j phi_j^H + I, assembled explicitly.
            let mut cy = Array2::<Complex64>::zeros((tau, tau));
            for a in 0..tau {
                cy[[a, a]] = Complex64::ONE;
            }
            for j in 0..2 {
                for a in 0..tau {
                    for b in 0..tau {
                        cy[[a, b]] += load * dep.beta[[m, j]] * pb.phi[[j, a]] * pb.phi[[j, b]].conj();
                    }
                }
            }
            for k in 0..2 {
                for i in 0..2 {
                    let mut quad = Complex64::ZERO;
                    for a in 0..tau {
                        for b in 0..tau {
                            quad += pb.phi[[i, a]].conj() * cy[[a, b]] * pb.phi[[k, b]];
                        }
                    }
                    let expected = es.c[[m, k]] * es.c[[m, i]] * quad;
                    let got = es.nu[[m, k, i]];
                    assert!((got - expected).norm() <= 1e-12 * expected.norm().max(es.gamma[[m, k]]));
                }
            }
            // Hermitian symmetry nu_mk^i = conj(nu_mi^k)
            assert!((es.nu[[m, 0, 1]] - es.nu[[m, 1, 0]].conj()).norm() < 1e-12 * es.gamma[[m, 0]]);
        }
    }

    #[test]
    fn gamma_increases_with_pilot_snr() {
        let cfg = small_cfg(PilotMode::RandomContaminated, 2, 3, 2, 1);
        let base = generate_deployment(&cfg, 3).unwrap();
        let pb = build_pilot_book(&cfg, 3).unwrap();
        let mut prev: Option<Array2<f64>> = None;
        for rho_p in [1e-2, 1e-1, 1.0, 10.0, 1e3, 1e6] {
            let dep = Deployment { rho_p, ..base.clone() };
            let g = estimation_stats(&dep, &pb, &cfg).unwrap().gamma;
            if let Some(p) = &prev {
                assert!(g.iter().zip(p.iter()).all(|(a, b)| a > b));
            }
            prev = Some(g);
        }
    }

    #[test]
    fn noiseless_perfect_estimation_limit() {
        // With rho_p huge the estimate converges to the true channel.
        let dep = Deployment::from_beta(array![[1.0, 0.4], [0.2, 3.0]], 1e14, 1.0).unwrap();
        let cfg = small_cfg(PilotMode::Orthogonal, 2, 2, 2, 3);
        let pb = build_pilot_book(&cfg, 0).unwrap();
        let es = estimation_stats(&dep, &pb, &cfg).unwrap();
        let r = draw_channels(&dep, &es, &pb, &cfg, 4).unwrap();
        for (g, h) in r.g.iter().zip(r.g_hat.iter()) {
            assert!((g - h).norm() < 1e-6 * g.norm().max(1.0));
        }
    }

    #[test]
    fn estimates_have_gamma_variance_and_are_orthogonal_to_error() {
        let cfg = small_cfg(PilotMode::RandomContaminated, 2, 3, 2, 2);
        let dep = generate_deployment(&cfg, 21).unwrap();
        let pb = build_pilot_book(&cfg, 21).unwrap();
        let es = estimation_stats(&dep, &pb, &cfg).unwrap();
        let mut sampler = ChannelSampler::new(&dep, &es, &pb, cfg.antennas_per_ap).unwrap();
        let mut rng = rng_from_seed(99);
        let mut r = sampler.empty_realization();
        let draws = 100_000;
        let (m, k) = (1, 2);
        let (mut s, mut s2, mut cross, mut cross2) = (0.0, 0.0, Complex64::ZERO, 0.0);
        for _ in 0..draws {
            sampler.draw_into(&mut rng, &mut r);
            let h = r.g_hat[[m, k, 0]];
            let e = r.g[[m, k, 0]] - h;
            s += h.norm_sqr();
            s2 += h.norm_sqr().powi(2);
            let p = h * e.conj();
            cross += p;
            cross2 += p.norm_sqr();
        }
        let n = draws as f64;
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        assert!((mean - es.gamma[[m, k]]).abs() < 3.0 * se, "{mean} vs {}", es.gamma[[m, k]]);
        let cross_mean = cross / n;
        let cross_se = ((cross2 / n) / n).sqrt();
        assert!(cross_mean.norm() < 3.0 * cross_se, "{cross_mean} vs {cross_se}");
    }
}
