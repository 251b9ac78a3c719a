//! Cross-method consistency battery.
//!
//! Each check compares two independent evaluations of one quantity and
//! records the tolerance next to what was achieved. Statistical checks use
//! 4 standard errors so the battery as a whole rarely trips by chance.

use std::fmt::Write as _;

use cellfree_oracle::{compare_terms, estimate_sub_expectations, ks_distance, lognormal_rate_mc, sample_hypoexp};
use cellfree_outage::config::{PilotMode, SystemConfig};
use cellfree_outage::hypoexp::{hypoexp_cdf, HypoExpParams};
use cellfree_outage::lognormal::{rate_bounds, rate_lognormal, rate_lognormal_t_domain, LogNormalParams};
use cellfree_outage::moments::{moments_general, moments_npc, sub_expectations, MomentSet, SubExpectations};
use cellfree_outage::sinr::DeploymentInstance;
use cellfree_outage::udr::{
    outage_exact_smallcase, outage_mmimo_closed_form, outage_udr, outage_udr_detailed, MmimoConstants, UdrBackend, UdrOptions,
};
use cellfree_outage::{db_to_linear, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// A couple of minutes.
    Fast,
    /// Adds the exact small-case integral and larger sample sizes.
    Full,
}

/// Mutation applied to the exact sub-expectations before they are compared
/// (test fixture for the battery's own sensitivity).
pub type Tamper = fn(&mut SubExpectations);

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub block: &'static str,
    pub check: String,
    pub tolerance: f64,
    pub achieved: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    fn push(&mut self, block: &'static str, check: impl Into<String>, tolerance: f64, achieved: f64) {
        let pass = achieved <= tolerance;
        self.rows.push(CheckRow { block, check: check.into(), tolerance, achieved, pass });
    }

    fn push_err(&mut self, block: &'static str, check: impl Into<String>, err: impl std::fmt::Display) {
        self.rows.push(CheckRow { block, check: format!("{} (error: {err})", check.into()), tolerance: 0.0, achieved: f64::NAN, pass: false });
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.check.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:<16} {:<width$} {:>10} {:>10}  result\n", "block", "check", "tolerance", "achieved");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<16} {:<width$} {:>10.3e} {:>10.3e}  {}",
                r.block,
                r.check,
                r.tolerance,
                r.achieved,
                if r.pass { "pass" } else { "FAIL" }
            );
        }
        s
    }
}

fn small(m: usize, n: usize, k: usize, tau: usize, mode: PilotMode) -> SystemConfig {
    SystemConfig { num_aps: m, antennas_per_ap: n, num_users: k, tau_p: tau, pilot_mode: mode, area_side_km: 0.3, ..Default::default() }
}

/// Runs the battery.
pub fn verify_suite(level: Level, tamper: Option<Tamper>) -> VerifyReport {
    let mut r = VerifyReport::default();
    moment_oracle(&mut r, level, tamper);
    npc_collapse(&mut r);
    closed_form(&mut r);
    rate_checks(&mut r, level);
    hypoexp_ks(&mut r, level);
    udr_backends(&mut r);
    if level == Level::Full {
        exact_small(&mut r);
    }
    r
}

fn moment_oracle(r: &mut VerifyReport, level: Level, tamper: Option<Tamper>) {
    const BLOCK: &str = "moment-oracle";
    let contaminated = PilotMode::RandomContaminated;
    let mut cases = vec![(small(3, 2, 3, 2, contaminated), 11, 1), (small(2, 2, 3, 3, PilotMode::Orthogonal), 21, 2)];
    let draws = match level {
        Level::Fast => 100_000,
        Level::Full => {
            cases.extend([(small(4, 1, 4, 2, contaminated), 31, 0), (small(2, 1, 2, 1, contaminated), 3, 0)]);
            1_000_000
        }
    };
    for (i, (cfg, seed, k)) in cases.into_iter().enumerate() {
        let name = format!("M={} N={} K={} {} user {k}", cfg.num_aps, cfg.antennas_per_ap, cfg.num_users, cfg.pilot_mode);
        let run = || -> Result<_> {
            let inst = DeploymentInstance::new(&cfg, seed, 0)?;
            let mut exact = sub_expectations(&inst.stats, &inst.deployment, &cfg, k)?;
            if let Some(f) = tamper {
                f(&mut exact);
            }
            let mc = estimate_sub_expectations(&inst.deployment, &inst.stats, &inst.pilots, cfg.antennas_per_ap, k, draws, 1000 + i as u64)?;
            Ok(compare_terms(&exact, &mc))
        };
        match run() {
            Ok(checks) => {
                let worst = checks.iter().max_by(|a, b| a.z_score().total_cmp(&b.z_score())).expect("terms");
                r.push(BLOCK, format!("{name}: worst term {} (z)", worst.label()), 4.0, worst.z_score());
            }
            Err(e) => r.push_err(BLOCK, name, e),
        }
    }
}

fn rel_diff(a: &MomentSet, b: &MomentSet) -> f64 {
    let pairs = [(a.ex, b.ex), (a.ex2, b.ex2), (a.ey, b.ey), (a.ey2, b.ey2), (a.exy, b.exy)];
    pairs.iter().map(|(x, y)| ((x - y) / y).abs()).fold(0.0, f64::max)
}

fn npc_collapse(r: &mut VerifyReport) {
    const BLOCK: &str = "npc-collapse";
    let cfg = SystemConfig { num_aps: 12, antennas_per_ap: 2, num_users: 5, tau_p: 5, ..Default::default() };
    let run = || -> Result<f64> {
        let inst = DeploymentInstance::new(&cfg, 4, 0)?;
        let mut worst = 0.0f64;
        for k in 0..cfg.num_users {
            let g = moments_general(&inst.stats, &inst.deployment, &cfg, k)?;
            let n = moments_npc(&inst.stats, &inst.deployment, &cfg, k)?;
            worst = worst.max(rel_diff(&g, &n));
        }
        Ok(worst)
    };
    match run() {
        Ok(v) => r.push(BLOCK, "general vs orthogonal moments, max rel. diff", 1e-9, v),
        Err(e) => r.push_err(BLOCK, "general vs orthogonal moments", e),
    }
}

fn closed_form(r: &mut VerifyReport) {
    const BLOCK: &str = "closed-form";
    let cfg = SystemConfig { num_aps: 16, antennas_per_ap: 4, num_users: 5, tau_p: 5, collocated: true, ..Default::default() };
    let run = || -> Result<(f64, f64)> {
        let inst = DeploymentInstance::new(&cfg, 8, 0)?;
        let (dep, es) = (&inst.deployment, &inst.stats);
        let beta = dep.beta.row(0).to_vec();
        let gamma = es.gamma.row(0).to_vec();
        let l = cfg.total_antennas();
        let (mut worst, mut jump) = (0.0f64, 0.0f64);
        for k in [0, 3] {
            let split = MmimoConstants::new(&beta, &gamma, l, dep.rho_u, 1.0, k)?.threshold_split;
            for j in 0..30 {
                let t = split * 10f64.powf(-1.0 + 2.0 * j as f64 / 29.0);
                let cf = outage_mmimo_closed_form(&beta, &gamma, l, dep.rho_u, t, k)?;
                worst = worst.max((cf - outage_udr(es, dep, &cfg, t, k)?).abs());
            }
            let eps = 1e-9 * split;
            let a = outage_mmimo_closed_form(&beta, &gamma, l, dep.rho_u, split - eps, k)?;
            let b = outage_mmimo_closed_form(&beta, &gamma, l, dep.rho_u, split + eps, k)?;
            jump = jump.max((a - b).abs());
        }
        Ok((worst, jump))
    };
    match run() {
        Ok((w, j)) => {
            r.push(BLOCK, "collocated closed form vs reduction, 30 T around T*", 1e-6, w);
            r.push(BLOCK, "continuity at T*", 1e-6, j);
        }
        Err(e) => r.push_err(BLOCK, "collocated closed form", e),
    }
}

fn rate_checks(r: &mut VerifyReport, level: Level) {
    const BLOCK: &str = "rate";
    let mut violations = 0.0;
    let mut quad_gap = 0.0f64;
    let mut failure = None;
    for i in 0..10 {
        for j in 0..10 {
            let p = LogNormalParams::from_mu_sigma(-4.0 + 10.0 * i as f64 / 9.0, 0.2 * (j + 1) as f64);
            match rate_lognormal(&p) {
                Ok(rate) => {
                    let (lb, ub) = rate_bounds(&p);
                    if !(lb < rate && rate < ub) {
                        violations += 1.0;
                    }
                    if i % 3 == 0 && j % 3 == 0 {
                        match rate_lognormal_t_domain(&p, 1e-9) {
                            Ok(t) => quad_gap = quad_gap.max((t - rate).abs()),
                            Err(e) => failure = Some(e),
                        }
                    }
                }
                Err(e) => failure = Some(e),
            }
        }
    }
    if let Some(e) = failure {
        r.push_err(BLOCK, "rate quadrature", e);
    }
    r.push(BLOCK, "bound violations on 100 (mu, sigma) points", 0.0, violations);
    r.push(BLOCK, "x-domain vs t-domain quadrature", 1e-6, quad_gap);
    let draws = if level == Level::Full { 2_000_000 } else { 200_000 };
    let mut worst = 0.0f64;
    for (i, (mu, sigma)) in [(0.0, 0.5), (2.0, 1.5), (-3.0, 1.0)].into_iter().enumerate() {
        let p = LogNormalParams::from_mu_sigma(mu, sigma);
        let est = lognormal_rate_mc(mu, sigma, draws, 70 + i as u64);
        if let Ok(rate) = rate_lognormal(&p) {
            worst = worst.max((rate - est.mean).abs() / est.std_err);
        }
    }
    r.push(BLOCK, format!("rate vs Log-normal sampling at {draws} draws (z)"), 4.0, worst);
}

fn hypoexp_ks(r: &mut VerifyReport, level: Level) {
    const BLOCK: &str = "hypoexp";
    let n = if level == Level::Full { 1_000_000 } else { 200_000 };
    // 1.95 / sqrt(n) is the 0.1% point of the KS statistic
    let tol = 1.95 / (n as f64).sqrt();
    let vectors: [&[f64]; 3] = [&[0.4, 1.3, 2.0, 5.5], &[1.0, 1.0 + 1e-10, 3.0], &[0.01, 0.02, 0.5, 0.51, 7.0, 30.0]];
    for (i, scales) in vectors.into_iter().enumerate() {
        let check = format!("KS, scales {scales:?}");
        match HypoExpParams::new(scales.to_vec()) {
            Ok(p) => {
                let mut xs = sample_hypoexp(scales, n, 500 + i as u64);
                r.push(BLOCK, check, tol, ks_distance(&mut xs, |d| hypoexp_cdf(&p, d)));
            }
            Err(e) => r.push_err(BLOCK, check, e),
        }
    }
}

fn udr_backends(r: &mut VerifyReport) {
    const BLOCK: &str = "udr-backends";
    let cfg = SystemConfig { num_aps: 20, antennas_per_ap: 2, num_users: 5, tau_p: 5, ..Default::default() };
    let run = || -> Result<f64> {
        let inst = DeploymentInstance::new(&cfg, 6, 0)?;
        let lag = UdrOptions { backend: UdrBackend::Laguerre, ..Default::default() };
        let mut worst = 0.0f64;
        for j in 0..10 {
            let t = db_to_linear(-20.0 + 4.0 * j as f64);
            let a = outage_udr_detailed(&inst.stats, &inst.deployment, &cfg, t, 2, &UdrOptions::default())?;
            let b = outage_udr_detailed(&inst.stats, &inst.deployment, &cfg, t, 2, &lag)?;
            worst = worst.max((a.raw - b.raw).abs());
        }
        Ok(worst)
    };
    match run() {
        Ok(v) => r.push(BLOCK, "Kronrod vs Laguerre, 10 thresholds", 1e-8, v),
        Err(e) => r.push_err(BLOCK, "Kronrod vs Laguerre", e),
    }
}

fn exact_small(r: &mut VerifyReport) {
    const BLOCK: &str = "exact-smallcase";
    // one variable: the reduction is exact, so the two must coincide
    let one = SystemConfig { num_aps: 1, antennas_per_ap: 1, num_users: 3, tau_p: 3, ..Default::default() };
    let run_one = || -> Result<f64> {
        let inst = DeploymentInstance::new(&one, 2, 0)?;
        let mut worst = 0.0f64;
        for j in 0..12 {
            let t = db_to_linear(-30.0 + 5.0 * j as f64);
            let e = outage_exact_smallcase(&inst.stats, &inst.deployment, &one, t, 0)?;
            worst = worst.max((e - outage_udr(&inst.stats, &inst.deployment, &one, t, 0)?).abs());
        }
        Ok(worst)
    };
    match run_one() {
        Ok(v) => r.push(BLOCK, "M N = 1: exact vs reduction", 1e-7, v),
        Err(e) => r.push_err(BLOCK, "M N = 1: exact vs reduction", e),
    }
    let two = SystemConfig { num_aps: 2, antennas_per_ap: 1, num_users: 3, tau_p: 3, ..Default::default() };
    let draws = 200_000;
    let run_two = || -> Result<f64> {
        let inst = DeploymentInstance::new(&two, 0, 0)?;
        let sets = inst.sample_all(&two, draws)?;
        let mut worst = 0.0f64;
        for (k, set) in sets.into_iter().enumerate() {
            let mut s = set.samples;
            s.sort_by(f64::total_cmp);
            for j in 0..10 {
                let t = db_to_linear(-30.0 + 4.0 * j as f64);
                let exact = outage_exact_smallcase(&inst.stats, &inst.deployment, &two, t, k)?;
                let mc = s.partition_point(|&x| x < t) as f64 / draws as f64;
                let se = (exact * (1.0 - exact) / draws as f64).sqrt().max(1.0 / draws as f64);
                worst = worst.max((mc - exact).abs() / se);
            }
        }
        Ok(worst)
    };
    match run_two() {
        Ok(v) => r.push(BLOCK, format!("M=2 N=1 K=3: exact vs simulated OP at {draws} draws (z)"), 4.0, v),
        Err(e) => r.push_err(BLOCK, "M=2 N=1 K=3: exact vs simulated OP", e),
    }
}
