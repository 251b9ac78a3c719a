//! Sum of independent exponentials with distinct scales.
//!
//! For scales `alpha_1..alpha_n` (means, not rates) the CDF of
//! `W = sum_i Exp(alpha_i)` is
//!
//! ```text
//! P(W <= d) = sum_i  alpha_i^(n-1) / prod_{j != i} (alpha_i - alpha_j) * (1 - exp(-d / alpha_i))
//! ```
//!
//! for `d >= 0`, and 0 below. The partial-fraction coefficients alternate in
//! sign, so the sum cancels badly when scales cluster or `n` grows. This module
//!
//! * separates near-equal scales (`|alpha_i - alpha_j| < 1e-9 max(alpha)`) by
//!   shrinking the smaller one by a relative `1e-7`, walking the sorted
//!   scales in index order so the result is deterministic,
//! * builds the coefficients in log-magnitude/sign form for `n > 7` (a
//!   signed mantissa with a separate base-2 exponent),
//! * falls back to the phase-type representation when the coefficients are
//!   large enough (`sum |coef| > 1e3`) that cancellation could cost more than
//!   three digits. That path evaluates `exp(S d)` for the bidiagonal
//!   sub-generator `S` with non-negative scaling-and-squaring, which has no
//!   cancellation at all.

use crate::error::{Error, Result};

const MERGE_REL: f64 = 1e-9;
const JITTER_REL: f64 = 1e-7;
const LOG_FORM_ABOVE: usize = 7;
const COEF_LIMIT: f64 = 1e3;

/// Validated exponential scales.
#[derive(Debug, Clone, PartialEq)]
pub struct HypoExpParams {
    scales: Vec<f64>,
}

impl HypoExpParams {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::Invalid("hypoexponential needs at least one scale".into()));
        }
        if let Some(bad) = scales.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Invalid(format!("hypoexponential scales must be finite and positive, got {bad}")));
        }
        Ok(HypoExpParams { scales })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn mean(&self) -> f64 {
        self.scales.iter().sum()
    }

    pub fn cdf(&self, d: f64) -> f64 {
        hypoexp_cdf(self, d)
    }
}

/// CDF of the hypoexponential at `d`. Never NaN for valid parameters.
///
/// ```
/// use cellfree_outage::hypoexp::{hypoexp_cdf, HypoExpParams};
///
/// let p = HypoExpParams::new(vec![2.0]).unwrap();
/// assert!((hypoexp_cdf(&p, 2.0) - (1.0 - (-1f64).exp())).abs() < 1e-15);
/// ```
pub fn hypoexp_cdf(p: &HypoExpParams, d: f64) -> f64 {
    cdf_from_scales(&p.scales, d)
}

/// Scale vectors up to this length are handled without heap allocation.
const STACK: usize = 24;

/// Same as [`hypoexp_cdf`] on a bare slice; scales are assumed positive.
pub(crate) fn cdf_from_scales(scales: &[f64], d: f64) -> f64 {
    if !(d > 0.0) {
        return 0.0;
    }
    if d == f64::INFINITY {
        return 1.0;
    }
    let n = scales.len();
    if n == 1 {
        return -(-d / scales[0]).exp_m1();
    }
    if n <= STACK {
        let mut alpha = [0.0; STACK];
        let mut coef = [0.0; STACK];
        cdf_with(scales, d, &mut alpha[..n], &mut coef[..n])
    } else {
        cdf_with(scales, d, &mut vec![0.0; n], &mut vec![0.0; n])
    }
}

fn cdf_with(scales: &[f64], d: f64, alpha: &mut [f64], coef: &mut [f64]) -> f64 {
    alpha.copy_from_slice(scales);
    separate(alpha);
    coefficients_into(alpha, coef);
    let magnitude: f64 = coef.iter().map(|c| c.abs()).sum();
    if !(magnitude <= COEF_LIMIT) {
        return phase_type_cdf(alpha, d);
    }
    let mut total = 0.0;
    for (c, a) in coef.iter().zip(alpha.iter()) {
        total += c * -(-d / a).exp_m1();
    }
    total.clamp(0.0, 1.0)
}

/// Deterministic in-place separation of near-equal scales.
fn separate(alpha: &mut [f64]) {
    let max = alpha.iter().cloned().fold(0.0, f64::max);
    let gap = MERGE_REL * max;
    let n = alpha.len();
    let crowded = (0..n).any(|i| ((i + 1)..n).any(|j| (alpha[i] - alpha[j]).abs() < gap));
    if !crowded {
        return;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| alpha[i].total_cmp(&alpha[j]).then(i.cmp(&j)));
    // walk from the largest downwards; any scale too close to the one above
    // it is pushed down by the relative jitter until it is separated
    for w in (1..n).rev() {
        let (lo, hi) = (order[w - 1], order[w]);
        if alpha[hi] - alpha[lo] < gap {
            alpha[lo] = alpha[lo].min(alpha[hi]) * (1.0 - JITTER_REL);
            if alpha[hi] - alpha[lo] < gap {
                // tiny scales next to a large one: the relative step is not enough
                alpha[lo] = (alpha[hi] - gap).max(0.5 * alpha[hi]);
            }
        }
    }
}

/// Partial-fraction coefficients `alpha_i^(n-1) / prod_{j != i} (alpha_i - alpha_j)`.
pub(crate) fn coefficients(alpha: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; alpha.len()];
    coefficients_into(alpha, &mut out);
    out
}

fn coefficients_into(alpha: &[f64], out: &mut [f64]) {
    let n = alpha.len();
    if n <= LOG_FORM_ABOVE {
        for i in 0..n {
            let mut c = alpha[i].powi(n as i32 - 1);
            for j in 0..n {
                if j != i {
                    c /= alpha[i] - alpha[j];
                }
            }
            out[i] = c;
        }
        return;
    }
    // prod_{j != i} alpha_i / (alpha_i - alpha_j) as a signed mantissa times
    // 2^exponent; the base-2 log-magnitude is carried in `exponent` so no
    // partial product can overflow or underflow
    const SHIFT: i32 = 256;
    let (big, small) = (2f64.powi(SHIFT), 2f64.powi(-SHIFT));
    for i in 0..n {
        let mut mantissa = 1.0;
        let mut exponent = 0i32;
        for j in 0..n {
            if j == i {
                continue;
            }
            mantissa *= alpha[i] / (alpha[i] - alpha[j]);
            let mag = mantissa.abs();
            if mag > big {
                mantissa *= small;
                exponent += SHIFT;
            } else if mag < small && mag > 0.0 {
                mantissa *= big;
                exponent -= SHIFT;
            }
        }
        out[i] = mantissa * 2f64.powi(exponent);
    }
}

/// Separated scales and their partial-fraction coefficients.
pub(crate) fn partial_fractions(scales: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = scales.to_vec();
    separate(&mut alpha);
    let coef = coefficients(&alpha);
    (alpha, coef)
}

/// `P(W <= d) = 1 - e_1^T exp(S d) 1` with `S` upper bidiagonal,
/// `S_ii = -1/alpha_i`, `S_{i,i+1} = 1/alpha_i`.
///
/// `exp(S t) = exp(-top t) exp((S + top I) t)` and `S + top I` is
/// non-negative, so the Taylor series and the squarings never cancel. All
/// matrices stay upper triangular; the Taylor steps multiply by a bidiagonal
/// matrix and cost `O(n^2)`.
fn phase_type_cdf(alpha: &[f64], d: f64) -> f64 {
    const TAYLOR_TERMS: usize = 20;
    let n = alpha.len();
    let top = alpha.iter().fold(0.0f64, |acc, a| acc.max(1.0 / a));
    let mut squarings = 0u32;
    let mut t = d;
    while top * t > 1.0 {
        t *= 0.5;
        squarings += 1;
    }
    // bidiagonal A = (S + top I) t
    let diag: Vec<f64> = alpha.iter().map(|a| (top - 1.0 / a) * t).collect();
    let upper: Vec<f64> = alpha.iter().map(|a| t / a).collect();

    // Horner: E <- I + A E / k for k = q..1
    let mut e = vec![0.0; n * n];
    for i in 0..n {
        e[i * n + i] = 1.0;
    }
    for k in (1..=TAYLOR_TERMS).rev() {
        let inv = 1.0 / k as f64;
        for i in 0..n {
            for j in i..n {
                let mut v = diag[i] * e[i * n + j];
                if i + 1 <= j {
                    v += upper[i] * e[(i + 1) * n + j];
                }
                e[i * n + j] = v * inv + if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    let decay = (-top * t).exp();
    e.iter_mut().for_each(|v| *v *= decay);

    let mut scratch = vec![0.0; n * n];
    for _ in 0..squarings {
        for i in 0..n {
            for j in i..n {
                let mut v = 0.0;
                for k in i..=j {
                    v += e[i * n + k] * e[k * n + j];
                }
                scratch[i * n + j] = v;
            }
        }
        std::mem::swap(&mut e, &mut scratch);
    }
    let survival: f64 = e[..n].iter().sum();
    (1.0 - survival).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cdf(scales: &[f64], d: f64) -> f64 {
        hypoexp_cdf(&HypoExpParams::new(scales.to_vec()).unwrap(), d)
    }

    #[test]
    fn single_scale() {
        assert!((cdf(&[2.0], 2.0) - 0.6321205588285577).abs() < 1e-15);
    }

    #[test]
    fn two_scales_closed_form() {
        let want = -(1.0 - (-2f64).exp()) + 2.0 * (1.0 - (-1f64).exp());
        assert!((cdf(&[1.0, 2.0], 2.0) - want).abs() < 1e-15);
        assert!((want - 0.3996).abs() < 1e-4);
    }

    #[test]
    fn negative_argument_is_zero() {
        assert_eq!(cdf(&[1.0, 3.0], -1.0), 0.0);
        assert_eq!(cdf(&[1.0, 3.0], 0.0), 0.0);
        assert_eq!(cdf(&[1.0, 3.0], f64::INFINITY), 1.0);
    }

    #[test]
    fn rejects_bad_scales() {
        assert!(HypoExpParams::new(vec![]).is_err());
        assert!(HypoExpParams::new(vec![1.0, 0.0]).is_err());
        assert!(HypoExpParams::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn equal_scales_approach_erlang() {
        // Erlang(3, 1): 1 - e^-d (1 + d + d^2/2)
        let d = 2.5;
        let want = 1.0 - (-d as f64).exp() * (1.0 + d + d * d / 2.0);
        let got = cdf(&[1.0, 1.0, 1.0], d);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn phase_type_agrees_with_partial_fractions() {
        let alpha = [0.3, 0.9, 1.7, 2.2, 4.0];
        for d in [0.01, 0.5, 2.0, 7.0, 30.0] {
            let pf = cdf(&alpha, d);
            let pt = phase_type_cdf(&alpha, d);
            assert!((pf - pt).abs() < 1e-13, "d={d}: {pf} vs {pt}");
        }
    }

    #[test]
    fn log_form_matches_direct_form() {
        let alpha: Vec<f64> = (0..9).map(|i| 0.5 + 0.37 * i as f64).collect();
        let log_form = coefficients(&alpha);
        for (i, c) in log_form.iter().enumerate() {
            let mut direct = alpha[i].powi(8);
            for j in 0..9 {
                if j != i {
                    direct /= alpha[i] - alpha[j];
                }
            }
            assert!(((c - direct) / direct).abs() < 1e-12);
        }
        assert!((log_form.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clustered_scales_stay_valid() {
        let alpha: Vec<f64> = (0..12).map(|i| 1.0 + 1e-4 * i as f64).collect();
        let mut prev = 0.0;
        for k in 1..60 {
            let v = cdf(&alpha, 0.5 * k as f64);
            assert!(v.is_finite() && (0.0..=1.0).contains(&v));
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn monotone_and_bounded() {
        let alpha = [0.2, 1.3, 0.7, 5.0];
        let mut prev = 0.0;
        for k in 0..400 {
            let v = cdf(&alpha, 0.1 * k as f64);
            assert!((0.0..=1.0).contains(&v) && v + 1e-14 >= prev);
            prev = v;
        }
        assert!(prev > 0.999);
    }
}
