//! Monte-Carlo estimates of the moment building blocks.
//!
//! For the tagged user `k` each channel draw gives
//! `A = ||g_hat_k||^2`, `B^i = |g_hat_k^H g_hat_i|^2` and
//! `C = sum_m w_m ||g_hat_mk||^2` with `w_m = sum_i (beta_mi - gamma_mi)`;
//! every product that enters the second moments of `X` and `Y` is averaged
//! with its standard error.

use cellfree_outage::channel::{ChannelSampler, EstimationStats, PilotBook};
use cellfree_outage::deployment::Deployment;
use cellfree_outage::moments::SubExpectations;
use cellfree_outage::rng::rng_from_seed;
use cellfree_outage::sinr::Estimate;
use cellfree_outage::Result;
use num_complex::Complex64;

use crate::Running;

/// Sample means of the building blocks. Per-interferer vectors are indexed by
/// user and carry `None` at the tagged user.
#[derive(Debug, Clone)]
pub struct SubExpectationEstimates {
    pub draws: u64,
    pub a: Estimate,
    pub a2: Estimate,
    pub a3: Estimate,
    pub a4: Estimate,
    pub c: Estimate,
    pub c2: Estimate,
    pub ac: Estimate,
    pub a2c: Estimate,
    pub b: Vec<Option<Estimate>>,
    pub ba: Vec<Option<Estimate>>,
    pub bc: Vec<Option<Estimate>>,
    pub a2b: Vec<Option<Estimate>>,
    pub sum_b2: Estimate,
}

/// Averages the building blocks of user `k` over `draws` channel draws.
pub fn estimate_sub_expectations(
    dep: &Deployment,
    es: &EstimationStats,
    pilots: &PilotBook,
    antennas: usize,
    k: usize,
    draws: u64,
    seed: u64,
) -> Result<SubExpectationEstimates> {
    let mut sampler = ChannelSampler::new(dep, es, pilots, antennas)?;
    let (m_count, k_count) = dep.beta.dim();
    if k >= k_count {
        return Err(cellfree_outage::Error::Index(format!("user {k} out of range for K = {k_count}")));
    }
    let mut real = sampler.empty_realization();
    let w: Vec<f64> = (0..m_count).map(|m| (0..k_count).map(|i| real.lambda_err[[m, i]]).sum()).collect();
    let mut rng = rng_from_seed(seed);

    let mut scalar = [Running::default(); 9];
    let mut per_user = vec![[Running::default(); 4]; k_count];
    let mut bi = vec![0.0; k_count];
    for _ in 0..draws {
        sampler.draw_into(&mut rng, &mut real);
        let g = &real.g_hat;
        let mut a = 0.0;
        let mut c = 0.0;
        for m in 0..m_count {
            let mut norm = 0.0;
            for n in 0..antennas {
                norm += g[[m, k, n]].norm_sqr();
            }
            a += norm;
            c += w[m] * norm;
        }
        let mut sum_b = 0.0;
        for i in (0..k_count).filter(|&i| i != k) {
            let mut inner = Complex64::ZERO;
            for m in 0..m_count {
                for n in 0..antennas {
                    inner += g[[m, k, n]].conj() * g[[m, i, n]];
                }
            }
            bi[i] = inner.norm_sqr();
            sum_b += bi[i];
        }
        let a2 = a * a;
        for (acc, v) in scalar.iter_mut().zip([a, a2, a2 * a, a2 * a2, c, c * c, a * c, a2 * c, sum_b * sum_b]) {
            acc.push(v);
        }
        for i in (0..k_count).filter(|&i| i != k) {
            let b = bi[i];
            for (acc, v) in per_user[i].iter_mut().zip([b, b * a, b * c, b * a2]) {
                acc.push(v);
            }
        }
    }
    let column = |j: usize| -> Vec<Option<Estimate>> {
        (0..k_count).map(|i| (i != k).then(|| per_user[i][j].estimate())).collect()
    };
    Ok(SubExpectationEstimates {
        draws,
        a: scalar[0].estimate(),
        a2: scalar[1].estimate(),
        a3: scalar[2].estimate(),
        a4: scalar[3].estimate(),
        c: scalar[4].estimate(),
        c2: scalar[5].estimate(),
        ac: scalar[6].estimate(),
        a2c: scalar[7].estimate(),
        b: column(0),
        ba: column(1),
        bc: column(2),
        a2b: column(3),
        sum_b2: scalar[8].estimate(),
    })
}

/// One closed-form value against its Monte-Carlo estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TermCheck {
    /// Term name such as `E[A^2 B^i]`.
    pub term: &'static str,
    /// Interfering user for per-interferer terms.
    pub interferer: Option<usize>,
    pub exact: f64,
    pub estimate: f64,
    pub std_err: f64,
}

impl TermCheck {
    /// `|exact - estimate|` in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.exact - self.estimate).abs() / self.std_err
    }

    pub fn label(&self) -> String {
        match self.interferer {
            Some(i) => format!("{} (i = {i})", self.term),
            None => self.term.to_string(),
        }
    }
}

/// Pairs every closed-form term with its estimate.
pub fn compare_terms(exact: &SubExpectations, mc: &SubExpectationEstimates) -> Vec<TermCheck> {
    let one = |term, exact, est: Estimate| TermCheck { term, interferer: None, exact, estimate: est.mean, std_err: est.std_err };
    let mut out = vec![
        one("E[A]", exact.a, mc.a),
        one("E[A^2]", exact.a2, mc.a2),
        one("E[A^3]", exact.a3, mc.a3),
        one("E[A^4]", exact.a4, mc.a4),
        one("E[C]", exact.c, mc.c),
        one("E[C^2]", exact.c2, mc.c2),
        one("E[A C]", exact.ac, mc.ac),
        one("E[A^2 C]", exact.a2c, mc.a2c),
        one("E[(sum B)^2]", exact.sum_b2, mc.sum_b2),
    ];
    let vectors: [(&'static str, &Vec<f64>, &Vec<Option<Estimate>>); 4] = [
        ("E[B^i]", &exact.b, &mc.b),
        ("E[B^i A]", &exact.ba, &mc.ba),
        ("E[B^i C]", &exact.bc, &mc.bc),
        ("E[A^2 B^i]", &exact.a2b, &mc.a2b),
    ];
    for (term, values, estimates) in vectors {
        for (i, (v, e)) in values.iter().zip(estimates).enumerate() {
            if let Some(e) = e {
                out.push(TermCheck { term, interferer: Some(i), exact: *v, estimate: e.mean, std_err: e.std_err });
            }
        }
    }
    out
}
