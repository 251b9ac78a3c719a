//! Direct samplers for the scalar distributions.

use cellfree_outage::rng::rng_from_seed;
use cellfree_outage::sinr::Estimate;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::Running;

/// `E[log2(1 + L)]` for `L = exp(mu + sigma Z)` from `draws` samples.
pub fn lognormal_rate_mc(mu: f64, sigma: f64, draws: u64, seed: u64) -> Estimate {
    let mut rng = rng_from_seed(seed);
    let mut acc = Running::default();
    for _ in 0..draws {
        let z: f64 = rng.sample(StandardNormal);
        let x = mu + sigma * z;
        // log(1 + e^x) without overflow
        let nats = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
        acc.push(nats / std::f64::consts::LN_2);
    }
    acc.estimate()
}

/// `n` draws of `sum_i E_i` with `E_i` exponential of mean `scales[i]`.
pub fn sample_hypoexp(scales: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| scales.iter().map(|s| s * rng.sample::<f64, _>(Exp1)).sum())
        .collect()
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and
/// `cdf`. Sorts `samples` in place.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let f = cdf(x);
            (f - j as f64 / n).max((j + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}
