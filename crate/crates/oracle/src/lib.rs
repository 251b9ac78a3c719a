//! Reference evaluations for `cellfree-outage`.
//!
//! Nothing here shares code with the analytic paths it checks. The
//! sub-expectation estimator pushes channel draws through the full pilot
//! pipeline and forms `A`, `B^i` and `C` from the raw estimates; the
//! samplers draw the Log-normal and hypoexponential variables directly.

pub mod sampling;
pub mod subexp;

pub use sampling::{ks_distance, lognormal_rate_mc, sample_hypoexp};
pub use subexp::{compare_terms, estimate_sub_expectations, SubExpectationEstimates, TermCheck};

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        (self.m2 / (n - 1.0) / n).sqrt()
    }

    pub fn estimate(&self) -> cellfree_outage::sinr::Estimate {
        cellfree_outage::sinr::Estimate { mean: self.mean(), std_err: self.std_err() }
    }
}

#[cfg(test)]
mod tests {
    use super::Running;

    #[test]
    fn running_matches_two_pass() {
        let xs = [1.5, -2.0, 3.25, 0.0, 7.0, 1.0];
        let mut r = Running::default();
        xs.iter().for_each(|&x| r.push(x));
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((r.mean() - mean).abs() < 1e-15);
        assert!((r.std_err() - (var / n).sqrt()).abs() < 1e-15);
    }
}
