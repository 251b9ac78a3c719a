//! Monte-Carlo evaluation of the effective SINR.
//!
//! With the MR-combined, stacked `MN`-vectors `g_hat_k`, the effective SINR of
//! user `k` is `lambda_k = X_k / Y_k` with
//!
//! ```text
//! X_k = rho_u ||g_hat_k||^4
//! Y_k = rho_u sum_{i != k} |g_hat_k^H g_hat_i|^2 + g_hat_k^H (rho_u sum_i Lambda_i + I) g_hat_k
//! ```
//!
//! and `Lambda_i = diag((beta_mi - gamma_mi) I_N)`. The simulator follows the
//! usual protocol: fix a deployment, draw many channel realizations, estimate
//! OP as the fraction of SINR samples below the threshold and the ergodic rate
//! as the sample mean of `log2(1 + lambda)`; then average over deployments.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{build_pilot_book, estimation_stats, ChannelRealization, ChannelSampler, EstimationStats, PilotBook};
use crate::config::SystemConfig;
use crate::db_to_linear;
use crate::deployment::{generate_deployment, Deployment};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// `(X_k, Y_k)` for one realization.
pub fn sinr_parts(real: &ChannelRealization, dep: &Deployment, k: usize) -> Result<(f64, f64)> {
    let (m_count, k_count, n_count) = real.g_hat.dim();
    if k >= k_count {
        return Err(Error::Index(format!("user {k} out of range for K = {k_count}")));
    }
    let rho = dep.rho_u;
    let mut norm = 0.0;
    let mut own = 0.0;
    for m in 0..m_count {
        let w = rho * real.lambda_err.row(m).sum() + 1.0;
        let a: f64 = (0..n_count).map(|n| real.g_hat[[m, k, n]].norm_sqr()).sum();
        norm += a;
        own += w * a;
    }
    let mut interference = 0.0;
    for i in (0..k_count).filter(|&i| i != k) {
        let mut inner = Complex64::ZERO;
        for m in 0..m_count {
            for n in 0..n_count {
                inner += real.g_hat[[m, k, n]].conj() * real.g_hat[[m, i, n]];
            }
        }
        interference += inner.norm_sqr();
    }
    Ok((rho * norm * norm, rho * interference + own))
}

/// Effective SINR of user `k` for one channel realization.
///
/// `es` is accepted for interface symmetry with the analytic paths; the
/// error variances are taken from `real.lambda_err`.
pub fn sinr_sample(real: &ChannelRealization, es: &EstimationStats, dep: &Deployment, k: usize) -> Result<f64> {
    let _ = es;
    let (x, y) = sinr_parts(real, dep, k)?;
    if y == 0.0 {
        return Err(Error::ZeroDenominator { user: k });
    }
    Ok(x / y)
}

/// SINR numerators and denominators of all users at once (Gram-matrix form).
pub struct AllUsers {
    weights: Vec<f64>,
    gram: Array2<Complex64>,
}

impl AllUsers {
    pub fn new(dep: &Deployment, es: &EstimationStats) -> Self {
        let k = dep.num_users();
        let weights = (0..dep.num_aps())
            .map(|m| {
                let err: f64 = (0..k).map(|i| dep.beta[[m, i]] - es.gamma[[m, i]]).sum();
                dep.rho_u * err + 1.0
            })
            .collect();
        AllUsers { weights, gram: Array2::zeros((k, k)) }
    }

    /// Writes `(X_k, Y_k)` for every user into `out`.
    pub fn parts(&mut self, real: &ChannelRealization, rho_u: f64, out: &mut [(f64, f64)]) {
        let (m_count, k_count, n_count) = real.g_hat.dim();
        self.gram.fill(Complex64::ZERO);
        let mut own = vec![0.0; k_count];
        let g = &real.g_hat;
        for m in 0..m_count {
            let w = self.weights[m];
            for n in 0..n_count {
                for a in 0..k_count {
                    let ga = g[[m, a, n]];
                    let p = ga.norm_sqr();
                    self.gram[[a, a]].re += p;
                    own[a] += w * p;
                    let gc = ga.conj();
                    for b in (a + 1)..k_count {
                        self.gram[[a, b]] += gc * g[[m, b, n]];
                    }
                }
            }
        }
        for k in 0..k_count {
            let norm = self.gram[[k, k]].re;
            let mut interference = 0.0;
            for i in 0..k_count {
                if i != k {
                    let z = if i > k { self.gram[[k, i]] } else { self.gram[[i, k]] };
                    interference += z.norm_sqr();
                }
            }
            out[k] = (rho_u * norm * norm, rho_u * interference + own[k]);
        }
    }
}

/// Running mean/variance accumulator of `X`, `Y` and their products.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct XyAccumulator {
    pub count: u64,
    sums: [f64; 5],
    sq_sums: [f64; 5],
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl XyAccumulator {
    pub fn push(&mut self, x: f64, y: f64) {
        let v = [x, x * x, y, y * y, x * y];
        self.count += 1;
        for j in 0..5 {
            self.sums[j] += v[j];
            self.sq_sums[j] += v[j] * v[j];
        }
    }

    fn estimate(&self, j: usize) -> Estimate {
        let n = self.count as f64;
        let mean = self.sums[j] / n;
        let var = (self.sq_sums[j] / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        Estimate { mean, std_err: (var / n).sqrt() }
    }

    /// Estimates of `E[X], E[X^2], E[Y], E[Y^2], E[XY]`, in that order.
    pub fn estimates(&self) -> [Estimate; 5] {
        std::array::from_fn(|j| self.estimate(j))
    }
}

/// SINR draws of one user in one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrSampleSet {
    pub user_index: usize,
    pub deployment_id: u64,
    pub seed: u64,
    pub samples: Vec<f64>,
}

/// Everything random about one deployment, regenerated from
/// `(cfg, master_seed, deployment_id)`.
#[derive(Debug, Clone)]
pub struct DeploymentInstance {
    pub deployment_id: u64,
    pub deployment: Deployment,
    pub pilots: PilotBook,
    pub stats: EstimationStats,
    pub channel_seed: u64,
}

impl DeploymentInstance {
    pub fn new(cfg: &SystemConfig, master_seed: u64, deployment_id: u64) -> Result<Self> {
        let seed = derive_seed(master_seed, deployment_id);
        let deployment = generate_deployment(cfg, derive_seed(seed, 0))?;
        let pilots = build_pilot_book(cfg, derive_seed(seed, 1))?;
        let stats = estimation_stats(&deployment, &pilots, cfg)?;
        Ok(DeploymentInstance { deployment_id, deployment, pilots, stats, channel_seed: derive_seed(seed, 2) })
    }

    /// `n_iters` SINR draws for every user (one sample set per user).
    pub fn sample_all(&self, cfg: &SystemConfig, n_iters: usize) -> Result<Vec<SinrSampleSet>> {
        let dep = &self.deployment;
        let k_count = dep.num_users();
        let mut sampler = ChannelSampler::new(dep, &self.stats, &self.pilots, cfg.antennas_per_ap)?;
        let mut rng = rng_from_seed(self.channel_seed);
        let mut real = sampler.empty_realization();
        let mut all = AllUsers::new(dep, &self.stats);
        let mut parts = vec![(0.0, 0.0); k_count];
        let mut sets: Vec<SinrSampleSet> = (0..k_count)
            .map(|k| SinrSampleSet {
                user_index: k,
                deployment_id: self.deployment_id,
                seed: self.channel_seed,
                samples: Vec::with_capacity(n_iters),
            })
            .collect();
        for _ in 0..n_iters {
            sampler.draw_into(&mut rng, &mut real);
            all.parts(&real, dep.rho_u, &mut parts);
            for (k, &(x, y)) in parts.iter().enumerate() {
                if y == 0.0 {
                    return Err(Error::ZeroDenominator { user: k });
                }
                sets[k].samples.push(x / y);
            }
        }
        Ok(sets)
    }
}

/// Empirical OP curve and ergodic rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCurve {
    pub thresholds_db: Vec<f64>,
    /// OP at each threshold.
    pub op: Vec<f64>,
    /// Ergodic rate estimate in bit/s/Hz.
    pub rate_bits: f64,
    /// Number of samples strictly below each threshold.
    pub counts: Vec<u64>,
    /// Total number of SINR samples behind the curve.
    pub samples: u64,
}

impl EmpiricalCurve {
    /// Curve of one sample set on `thresholds_db` (ascending, in dB).
    pub fn from_samples(thresholds_db: &[f64], mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let counts: Vec<u64> = thresholds_db
            .iter()
            .map(|&t| {
                let lin = db_to_linear(t);
                samples.partition_point(|&s| s < lin) as u64
            })
            .collect();
        let op = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let rate_bits = samples.iter().map(|s| s.ln_1p()).sum::<f64>() / (n as f64 * std::f64::consts::LN_2);
        EmpiricalCurve { thresholds_db: thresholds_db.to_vec(), op, rate_bits, counts, samples: n as u64 }
    }

    /// Average of several curves on the same grid; counts are summed.
    pub fn average(curves: &[&EmpiricalCurve]) -> Self {
        let first = curves[0];
        let n = curves.len() as f64;
        let points = first.thresholds_db.len();
        let mut op = vec![0.0; points];
        let mut counts = vec![0u64; points];
        let mut rate = 0.0;
        let mut samples = 0;
        for c in curves {
            for j in 0..points {
                op[j] += c.op[j];
                counts[j] += c.counts[j];
            }
            rate += c.rate_bits;
            samples += c.samples;
        }
        op.iter_mut().for_each(|v| *v /= n);
        EmpiricalCurve { thresholds_db: first.thresholds_db.clone(), op, rate_bits: rate / n, counts, samples }
    }
}

/// Result of [`run_monte_carlo`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOutput {
    /// `per_deployment[d][k]`: curve of user `k` in deployment `d`.
    pub per_deployment: Vec<Vec<EmpiricalCurve>>,
    /// Curve of each user averaged over deployments.
    pub per_user: Vec<EmpiricalCurve>,
    /// Average over deployments and users.
    pub system: EmpiricalCurve,
    pub master_seed: u64,
    pub n_iters: usize,
}

/// Runs the simulation protocol: `n_deployments` independent deployments,
/// `n_iters` channel draws each.
///
/// Deployments run in parallel on the current rayon pool; results are
/// reduced in deployment order, so the output is identical for any thread
/// count.
pub fn run_monte_carlo(
    cfg: &SystemConfig,
    n_deployments: usize,
    n_iters: usize,
    thresholds_db: &[f64],
    master_seed: u64,
) -> Result<MonteCarloOutput> {
    if n_deployments == 0 || n_iters == 0 {
        return Err(Error::InvalidConfig("Monte-Carlo needs at least one deployment and one iteration".into()));
    }
    if thresholds_db.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidConfig("thresholds must be sorted ascending".into()));
    }
    cfg.validate()?;
    let per_deployment: Vec<Vec<EmpiricalCurve>> = (0..n_deployments as u64)
        .into_par_iter()
        .map(|d| {
            let inst = DeploymentInstance::new(cfg, master_seed, d)?;
            let sets = inst.sample_all(cfg, n_iters)?;
            Ok(sets.into_iter().map(|s| EmpiricalCurve::from_samples(thresholds_db, s.samples)).collect())
        })
        .collect::<Result<_>>()?;
    let k_count = cfg.num_users;
    let per_user: Vec<EmpiricalCurve> = (0..k_count)
        .map(|k| EmpiricalCurve::average(&per_deployment.iter().map(|d| &d[k]).collect::<Vec<_>>()))
        .collect();
    let all: Vec<&EmpiricalCurve> = per_deployment.iter().flatten().collect();
    let system = EmpiricalCurve::average(&all);
    Ok(MonteCarloOutput { per_deployment, per_user, system, master_seed, n_iters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PilotMode;
    use ndarray::{array, Array3};

    fn scalar_case() -> (ChannelRealization, Deployment, EstimationStats) {
        let beta = array![[1.0, 1.0]];
        let dep = Deployment::from_beta(beta, 1.0, 1.0).unwrap();
        let es = EstimationStats {
            c: array![[0.5, 0.5]],
            gamma: array![[0.5, 0.5]],
            nu: Array3::zeros((1, 2, 2)),
        };
        let mut real = ChannelRealization::zeros(1, 2, 1);
        real.g_hat[[0, 0, 0]] = Complex64::new(1.0, 0.0);
        real.g_hat[[0, 1, 0]] = Complex64::new(2.0, 0.0);
        real.lambda_err = array![[0.5, 0.5]];
        (real, dep, es)
    }

    #[test]
    fn hand_evaluated_scalar_case() {
        let (real, dep, es) = scalar_case();
        let v = sinr_sample(&real, &es, &dep, 0).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn single_user_has_no_interference() {
        let dep = Deployment::from_beta(array![[2.0], [1.0]], 1.0, 0.7).unwrap();
        let es = EstimationStats { c: array![[1.0], [1.0]], gamma: array![[1.5], [0.6]], nu: Array3::zeros((2, 1, 1)) };
        let mut real = ChannelRealization::zeros(2, 1, 2);
        real.lambda_err = &dep.beta - &es.gamma;
        real.g_hat[[0, 0, 0]] = Complex64::new(0.3, -1.0);
        real.g_hat[[0, 0, 1]] = Complex64::new(0.1, 0.2);
        real.g_hat[[1, 0, 0]] = Complex64::new(-0.7, 0.4);
        real.g_hat[[1, 0, 1]] = Complex64::new(1.2, 0.0);
        let a0 = 1.09 + 0.05;
        let a1 = 0.65 + 1.44;
        let norm = a0 + a1;
        let want = 0.7 * norm * norm / ((0.7 * 0.5 + 1.0) * a0 + (0.7 * 0.4 + 1.0) * a1);
        let got = sinr_sample(&real, &es, &dep, 0).unwrap();
        assert!((got - want).abs() < 1e-14 * want);
    }

    #[test]
    fn phase_rotation_invariance() {
        let cfg = SystemConfig { num_aps: 3, num_users: 3, antennas_per_ap: 2, tau_p: 2, pilot_mode: PilotMode::RandomContaminated, ..Default::default() };
        let inst = DeploymentInstance::new(&cfg, 5, 0).unwrap();
        let mut sampler = ChannelSampler::new(&inst.deployment, &inst.stats, &inst.pilots, 2).unwrap();
        let real = sampler.draw(&mut rng_from_seed(1));
        let mut rotated = real.clone();
        let phase = Complex64::from_polar(1.0, 0.83);
        rotated.g_hat.mapv_inplace(|z| z * phase);
        for k in 0..3 {
            let a = sinr_sample(&real, &inst.stats, &inst.deployment, k).unwrap();
            let b = sinr_sample(&rotated, &inst.stats, &inst.deployment, k).unwrap();
            assert!((a - b).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn zero_channel_is_an_error() {
        let (mut real, dep, es) = scalar_case();
        real.g_hat.fill(Complex64::ZERO);
        assert_eq!(sinr_sample(&real, &es, &dep, 0), Err(Error::ZeroDenominator { user: 0 }));
        assert!(matches!(sinr_sample(&real, &es, &dep, 5), Err(Error::Index(_))));
    }

    #[test]
    fn gram_form_matches_direct_form() {
        let cfg = SystemConfig { num_aps: 4, num_users: 4, antennas_per_ap: 3, tau_p: 2, pilot_mode: PilotMode::RandomContaminated, ..Default::default() };
        let inst = DeploymentInstance::new(&cfg, 9, 2).unwrap();
        let dep = &inst.deployment;
        let mut sampler = ChannelSampler::new(dep, &inst.stats, &inst.pilots, 3).unwrap();
        let real = sampler.draw(&mut rng_from_seed(3));
        let mut all = AllUsers::new(dep, &inst.stats);
        let mut out = vec![(0.0, 0.0); 4];
        all.parts(&real, dep.rho_u, &mut out);
        for k in 0..4 {
            let (x, y) = sinr_parts(&real, dep, k).unwrap();
            assert!((x - out[k].0).abs() <= 1e-12 * x);
            assert!((y - out[k].1).abs() <= 1e-12 * y);
        }
    }

    #[test]
    fn sentinels_and_monotonicity() {
        let cfg = SystemConfig { num_aps: 6, num_users: 3, antennas_per_ap: 1, tau_p: 3, ..Default::default() };
        let th = [f64::NEG_INFINITY, -20.0, -10.0, 0.0, 10.0, 20.0, f64::INFINITY];
        let out = run_monte_carlo(&cfg, 3, 200, &th, 1).unwrap();
        for c in out.per_user.iter().chain(std::iter::once(&out.system)) {
            assert_eq!(c.op[0], 0.0);
            assert_eq!(*c.op.last().unwrap(), 1.0);
            assert!(c.op.windows(2).all(|w| w[0] <= w[1]));
            assert!(c.rate_bits > 0.0);
        }
        assert_eq!(out.system.samples, 3 * 3 * 200);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = SystemConfig { num_aps: 5, num_users: 2, antennas_per_ap: 2, tau_p: 2, ..Default::default() };
        let th = [-10.0, 0.0, 10.0];
        let a = run_monte_carlo(&cfg, 4, 50, &th, 77).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| run_monte_carlo(&cfg, 4, 50, &th, 77).unwrap());
        assert_eq!(a, b);
        let c = run_monte_carlo(&cfg, 4, 50, &th, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_counts() {
        let cfg = SystemConfig::default();
        assert!(run_monte_carlo(&cfg, 0, 10, &[0.0], 1).is_err());
        assert!(run_monte_carlo(&cfg, 1, 0, &[0.0], 1).is_err());
        assert!(run_monte_carlo(&cfg, 1, 1, &[1.0, 0.0], 1).is_err());
    }

    #[test]
    fn accumulator_moments() {
        let mut acc = XyAccumulator::default();
        for (x, y) in [(1.0, 2.0), (3.0, 4.0)] {
            acc.push(x, y);
        }
        let e = acc.estimates();
        assert_eq!(e[0].mean, 2.0);
        assert_eq!(e[1].mean, 5.0);
        assert_eq!(e[4].mean, 7.0);
        assert!((e[0].std_err - 1.0).abs() < 1e-12);
    }
}
