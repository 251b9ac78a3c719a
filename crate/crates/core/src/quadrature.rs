//! Numerical integration.
//!
//! * [`gauss_kronrod`]: globally adaptive 7/15-point Gauss–Kronrod on a
//!   finite interval. The error estimate of a panel is the raw
//!   `|K15 - G7|` difference (no QUADPACK rescaling), which is pessimistic
//!   for smooth integrands but never optimistic.
//! * [`GaussRule::legendre`] and [`GaussRule::laguerre`]: fixed rules built by
//!   Newton iteration on the three-term recurrences.
//! * [`adaptive_simpson`]: recursive Simpson with Richardson correction, used
//!   as an independent cross-check.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// Stopping rule for the adaptive integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Tolerance { abs, rel: 0.0, max_panels: 4000 }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

fn kronrod_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]` (finite).
///
/// ```
/// use cellfree_outage::quadrature::{gauss_kronrod, Tolerance};
///
/// let r = gauss_kronrod(|x| x.exp(), 0.0, 1.0, Tolerance::absolute(1e-12)).unwrap();
/// assert!((r.value - (1f64.exp() - 1.0)).abs() < 1e-12);
/// ```
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, abs_error: 0.0, evaluations: 0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Invalid(format!("gauss_kronrod needs finite limits, got [{a}, {b}]")));
    }
    let (value, error) = kronrod_panel(&mut f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error });
    let (mut total, mut total_err) = (value, error);
    while total_err > tol.target(total) {
        if heap.len() >= tol.max_panels {
            return Err(Error::Quadrature { achieved: total_err, tolerance: tol.target(total) });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // interval cannot be split further in floating point
            return Err(Error::Quadrature { achieved: total_err, tolerance: tol.target(total) });
        }
        let (v1, e1) = kronrod_panel(&mut f, worst.a, mid);
        let (v2, e2) = kronrod_panel(&mut f, mid, worst.b);
        evaluations += 30;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
        // re-sum from the panels to avoid drift from repeated updates
        total = heap.iter().map(|p| p.value).sum();
        total_err = heap.iter().map(|p| p.error).sum();
        if !total.is_finite() {
            return Err(Error::Invalid("integrand produced a non-finite value".into()));
        }
    }
    Ok(Integral { value: total, abs_error: total_err, evaluations })
}

/// Integral over consecutive intervals `[p0, p1], [p1, p2], ...`; the
/// tolerance applies to each piece.
pub fn gauss_kronrod_pieces<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], tol: Tolerance) -> Result<Integral> {
    let mut out = Integral { value: 0.0, abs_error: 0.0, evaluations: 0 };
    for w in points.windows(2) {
        let r = gauss_kronrod(&mut f, w[0], w[1], tol)?;
        out.value += r.value;
        out.abs_error += r.abs_error;
        out.evaluations += r.evaluations;
    }
    Ok(out)
}

/// Adaptive Simpson with Richardson extrapolation on `[a, b]`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, max_depth: u32) -> Result<Integral> {
    fn step<F: FnMut(f64) -> f64>(
        f: &mut F,
        (a, fa): (f64, f64),
        (m, fm): (f64, f64),
        (b, fb): (f64, f64),
        whole: f64,
        tol: f64,
        depth: u32,
        acc: &mut Integral,
    ) -> bool {
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        acc.evaluations += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            acc.value += left + right + delta / 15.0;
            acc.abs_error += delta.abs() / 15.0;
            return depth > 0 || delta.abs() <= 15.0 * tol;
        }
        let ok_left = step(f, (a, fa), (lm, flm), (m, fm), left, 0.5 * tol, depth - 1, acc);
        let ok_right = step(f, (m, fm), (rm, frm), (b, fb), right, 0.5 * tol, depth - 1, acc);
        ok_left && ok_right
    }

    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut acc = Integral { value: 0.0, abs_error: 0.0, evaluations: 3 };
    let ok = step(&mut f, (a, fa), (m, fm), (b, fb), whole, abs_tol, max_depth, &mut acc);
    if !ok {
        return Err(Error::Quadrature { achieved: acc.abs_error, tolerance: abs_tol });
    }
    Ok(acc)
}

/// A fixed Gaussian rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss–Legendre rule with `n` points on `[-1, 1]`.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    /// Gauss–Laguerre rule with `n` points for `int_0^inf f(x) e^{-x} dx`.
    pub fn laguerre(n: usize) -> Self {
        assert!(n >= 1);
        let nf = n as f64;
        let mut nodes: Vec<f64> = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut z = 0.0;
        for i in 0..n {
            // initial guesses (classic asymptotic estimates)
            z = match i {
                0 => 3.0 / (1.0 + 2.4 * nf),
                1 => z + 15.0 / (1.0 + 2.5 * nf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
                }
            };
            let mut pp = 0.0;
            let mut p_prev = 0.0;
            for _ in 0..200 {
                let (p, p1) = laguerre_pair(n, z);
                pp = nf * (p - p1) / z;
                p_prev = p1;
                let dz = p / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, p1) = laguerre_pair(n, z);
            p_prev = if p1.is_finite() { p1 } else { p_prev };
            let _ = pp;
            nodes.push(z);
            // w = x / ((n+1)^2 L_{n+1}(x)^2), written via L_{n-1}: w = x / (n^2 L_{n-1}(x)^2)
            weights.push(z / (nf * nf * p_prev * p_prev));
        }
        GaussRule { nodes, weights }
    }

    /// Applies a Legendre rule mapped to `[a, b]`.
    pub fn integrate_on<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
    }

    /// Applies the rule as-is (`sum w_i f(x_i)`).
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 1 { (x, 1.0) } else { (p1, p0) };
    (p, n as f64 * (x * p - pm1) / (x * x - 1.0))
}

/// `(L_n(x), L_{n-1}(x))` by the three-term recurrence.
fn laguerre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p_prev, mut p) = (0.0, 1.0);
    for j in 0..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 - x) * p - jf * p_prev) / (jf + 1.0);
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}
