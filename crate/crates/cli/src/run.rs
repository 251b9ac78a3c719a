//! Running an [`ExperimentSpec`] and writing its CSV and text outputs.
//!
//! Every method is evaluated on the same deployments: deployment `d` of a
//! sweep point is regenerated from `(master_seed, d)`, and its users'
//! analytic curves sit next to their simulated ones. The system curve of a
//! point is the mean over deployments and users.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use cellfree_outage::config::{PilotMode, SystemConfig};
use cellfree_outage::lognormal::{fit_lognormal, outage_lognormal, rate_bounds, rate_lognormal, rate_uatf};
use cellfree_outage::moments::{moments_general, moments_npc};
use cellfree_outage::sinr::{DeploymentInstance, EmpiricalCurve};
use cellfree_outage::udr::{outage_exact_smallcase, outage_mmimo_closed_form, outage_udr};
use cellfree_outage::{db_to_linear, Result};

use crate::spec::{ExperimentSpec, Method, SweepPoint};

/// OP band in which analytic and simulated curves are compared.
pub const BAND: (f64, f64) = (0.05, 0.95);

/// Curves and rates of one user, or an average of several. Absent methods
/// are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curves {
    /// OP per method on the threshold grid.
    pub op: BTreeMap<Method, Vec<f64>>,
    pub rate_simulated: Option<f64>,
    pub rate_lognormal: Option<f64>,
    pub rate_lb: Option<f64>,
    pub rate_ub: Option<f64>,
    pub rate_uatf: Option<f64>,
}

impl Curves {
    fn mean(all: &[&Curves], methods: impl Iterator<Item = Method>) -> Curves {
        let n = all.len() as f64;
        let avg = |get: &dyn Fn(&Curves) -> Option<f64>| -> Option<f64> {
            let vals: Option<Vec<f64>> = all.iter().map(|c| get(c)).collect();
            vals.map(|v| v.iter().sum::<f64>() / n)
        };
        let mut op = BTreeMap::new();
        for m in methods {
            let curves: Option<Vec<&Vec<f64>>> = all.iter().map(|c| c.op.get(&m)).collect();
            if let Some(cs) = curves.filter(|cs| !cs.is_empty()) {
                let mut acc = vec![0.0; cs[0].len()];
                for c in cs {
                    acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
                }
                acc.iter_mut().for_each(|a| *a /= n);
                op.insert(m, acc);
            }
        }
        Curves {
            op,
            rate_simulated: avg(&|c| c.rate_simulated),
            rate_lognormal: avg(&|c| c.rate_lognormal),
            rate_lb: avg(&|c| c.rate_lb),
            rate_ub: avg(&|c| c.rate_ub),
            rate_uatf: avg(&|c| c.rate_uatf),
        }
    }

    /// Largest `|op_method - op_simulated|` over thresholds where the
    /// simulated OP lies in [`BAND`]. `None` when either curve is missing or
    /// no simulated point falls in the band.
    pub fn max_deviation(&self, method: Method) -> Option<f64> {
        let sim = self.op.get(&Method::Mc)?;
        let other = self.op.get(&method)?;
        sim.iter()
            .zip(other)
            .filter(|(s, _)| (BAND.0..=BAND.1).contains(*s))
            .map(|(s, o)| (o - s).abs())
            .reduce(f64::max)
    }
}

/// Result of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub point: SweepPoint,
    /// Average over deployments and users.
    pub system: Curves,
    /// `per_user[k]`: average over deployments.
    pub per_user: Vec<Curves>,
    /// Failures that blanked a column, with where they happened.
    pub annotations: Vec<String>,
}

/// Result of a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub points: Vec<PointResult>,
}

/// Validates, computes every sweep point, and writes the outputs when
/// `spec.output_path` is set.
pub fn run_experiment(spec: &ExperimentSpec) -> anyhow::Result<ExperimentResult> {
    let result = compute(spec)?;
    if !spec.output_path.as_os_str().is_empty() {
        write_outputs(&result, &spec.output_path)?;
    }
    Ok(result)
}

/// Validates and computes without touching the file system.
pub fn compute(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let points = spec.points()?.into_iter().map(|p| compute_point(spec, p)).collect();
    Ok(ExperimentResult { spec: spec.clone(), points })
}

fn compute_point(spec: &ExperimentSpec, point: SweepPoint) -> PointResult {
    let cfg = &point.cfg;
    let grid = spec.grid();
    let per_deployment: Vec<std::result::Result<Vec<(Curves, Vec<String>)>, String>> = (0..spec.mc_deployments as u64)
        .into_par_iter()
        .map(|d| evaluate_deployment(spec, cfg, grid, d).map_err(|e| format!("deployment {d}: {e}")))
        .collect();

    let mut annotations = Vec::new();
    let mut users: Vec<Vec<Curves>> = vec![Vec::new(); cfg.num_users];
    for outcome in per_deployment {
        match outcome {
            Ok(list) => {
                for (k, (curves, notes)) in list.into_iter().enumerate() {
                    annotations.extend(notes);
                    users[k].push(curves);
                }
            }
            Err(note) => annotations.push(note),
        }
    }
    let methods = || spec.methods.iter().copied();
    let per_user: Vec<Curves> = users
        .iter()
        .map(|list| if list.is_empty() { Curves::default() } else { Curves::mean(&list.iter().collect::<Vec<_>>(), methods()) })
        .collect();
    let all: Vec<&Curves> = users.iter().flatten().collect();
    let system = if all.is_empty() { Curves::default() } else { Curves::mean(&all, methods()) };
    PointResult { point, system, per_user, annotations }
}

fn evaluate_deployment(spec: &ExperimentSpec, cfg: &SystemConfig, grid: &[f64], d: u64) -> Result<Vec<(Curves, Vec<String>)>> {
    let inst = DeploymentInstance::new(cfg, spec.master_seed, d)?;
    let mut notes = Vec::new();
    let mut sim: Vec<Option<EmpiricalCurve>> = vec![None; cfg.num_users];
    if spec.methods.contains(&Method::Mc) {
        match inst.sample_all(cfg, spec.mc_iters) {
            Ok(sets) => {
                for (slot, set) in sim.iter_mut().zip(sets) {
                    *slot = Some(EmpiricalCurve::from_samples(grid, set.samples));
                }
            }
            Err(e) => notes.push(format!("mc failed for deployment {d}: {e}")),
        }
    }
    let linear: Vec<f64> = grid.iter().map(|&t| db_to_linear(t)).collect();
    let mut out = Vec::with_capacity(cfg.num_users);
    for (k, curve) in sim.into_iter().enumerate() {
        let mut c = Curves::default();
        let mut user_notes = std::mem::take(&mut notes);
        let mut note = |m: Method, e: &dyn std::fmt::Display| user_notes.push(format!("{m} failed for deployment {d}, user {k}: {e}"));
        if let Some(curve) = curve {
            c.rate_simulated = Some(curve.rate_bits);
            c.op.insert(Method::Mc, curve.op);
        }
        if spec.methods.contains(&Method::Lognormal) {
            let fitted = if cfg.pilot_mode == PilotMode::Orthogonal {
                moments_npc(&inst.stats, &inst.deployment, cfg, k)
            } else {
                moments_general(&inst.stats, &inst.deployment, cfg, k)
            }
            .and_then(|ms| fit_lognormal(&ms));
            match fitted.and_then(|p| Ok((p, rate_lognormal(&p)?))) {
                Ok((p, rate)) => {
                    let (lb, ub) = rate_bounds(&p);
                    c.op.insert(Method::Lognormal, linear.iter().map(|&t| outage_lognormal(&p, t)).collect());
                    c.rate_lognormal = Some(rate);
                    c.rate_lb = Some(lb);
                    c.rate_ub = Some(ub);
                }
                Err(e) => note(Method::Lognormal, &e),
            }
        }
        match rate_uatf(&inst.stats, &inst.deployment, &inst.pilots, cfg, k) {
            Ok(r) => c.rate_uatf = Some(r),
            Err(e) => user_notes.push(format!("uatf failed for deployment {d}, user {k}: {e}")),
        }
        let mut curve_of = |m: Method, f: &dyn Fn(f64) -> Result<f64>| {
            if spec.methods.contains(&m) {
                match linear.iter().map(|&t| f(t)).collect::<Result<Vec<f64>>>() {
                    Ok(v) => {
                        c.op.insert(m, v);
                    }
                    Err(e) => user_notes.push(format!("{m} failed for deployment {d}, user {k}: {e}")),
                }
            }
        };
        curve_of(Method::Udr, &|t| outage_udr(&inst.stats, &inst.deployment, cfg, t, k));
        curve_of(Method::ExactSmall, &|t| outage_exact_smallcase(&inst.stats, &inst.deployment, cfg, t, k));
        if spec.methods.contains(&Method::MmimoClosed) {
            let beta = inst.deployment.beta.row(0).to_vec();
            let gamma = inst.stats.gamma.row(0).to_vec();
            let l = cfg.total_antennas();
            curve_of(Method::MmimoClosed, &|t| outage_mmimo_closed_form(&beta, &gamma, l, inst.deployment.rho_u, t, k));
        }
        out.push((c, user_notes));
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns of the per-point curve files.
pub const CURVE_COLUMNS: [&str; 11] = [
    "threshold_db",
    "op_simulated",
    "op_lognormal",
    "op_udr",
    "rate_simulated",
    "rate_lognormal",
    "rate_lb",
    "rate_ub",
    "rate_uatf",
    "op_mmimo_closed",
    "op_exact_small",
];

fn curve_rows(out: &mut String, prefix: &str, grid: &[f64], c: &Curves) {
    let op = |m: Method, j: usize| fmt_opt(c.op.get(&m).map(|v| v[j]));
    for (j, t) in grid.iter().enumerate() {
        let cells = [
            t.to_string(),
            op(Method::Mc, j),
            op(Method::Lognormal, j),
            op(Method::Udr, j),
            fmt_opt(c.rate_simulated),
            fmt_opt(c.rate_lognormal),
            fmt_opt(c.rate_lb),
            fmt_opt(c.rate_ub),
            fmt_opt(c.rate_uatf),
            op(Method::MmimoClosed, j),
            op(Method::ExactSmall, j),
        ];
        let _ = writeln!(out, "{prefix}{}", cells.join(","));
    }
}

/// System curve of a point as CSV text.
pub fn point_csv(result: &ExperimentResult, p: &PointResult) -> String {
    let mut s = CURVE_COLUMNS.join(",") + "\n";
    curve_rows(&mut s, "", result.spec.grid(), &p.system);
    s
}

/// Per-user curves of a point as CSV text (leading `user` column).
pub fn users_csv(result: &ExperimentResult, p: &PointResult) -> String {
    let mut s = format!("user,{}\n", CURVE_COLUMNS.join(","));
    for (k, c) in p.per_user.iter().enumerate() {
        curve_rows(&mut s, &format!("{k},"), result.spec.grid(), c);
    }
    s
}

const ANALYTIC: [Method; 4] = [Method::Lognormal, Method::Udr, Method::MmimoClosed, Method::ExactSmall];

/// One row per sweep point.
pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut s = String::from(
        "point,axis,value,num_aps,antennas_per_ap,num_users,pilot_mode,deployments,mc_iters,\
         rate_simulated,rate_lognormal,rate_lb,rate_ub,rate_uatf,\
         dev_lognormal,dev_udr,dev_mmimo_closed,dev_exact_small,annotations\n",
    );
    for p in &result.points {
        let cfg = &p.point.cfg;
        let c = &p.system;
        let mut cells = vec![
            p.point.index.to_string(),
            result.spec.sweep_axis.to_string(),
            fmt_opt(p.point.value),
            cfg.num_aps.to_string(),
            cfg.antennas_per_ap.to_string(),
            cfg.num_users.to_string(),
            cfg.pilot_mode.to_string(),
            result.spec.mc_deployments.to_string(),
            result.spec.mc_iters.to_string(),
            fmt_opt(c.rate_simulated),
            fmt_opt(c.rate_lognormal),
            fmt_opt(c.rate_lb),
            fmt_opt(c.rate_ub),
            fmt_opt(c.rate_uatf),
        ];
        cells.extend(ANALYTIC.iter().map(|&m| fmt_opt(c.max_deviation(m))));
        cells.push(p.annotations.len().to_string());
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

/// Human-readable comparison report.
pub fn report_text(result: &ExperimentResult) -> String {
    let spec = &result.spec;
    let mut s = String::new();
    let methods: Vec<&str> = spec.methods.iter().map(|m| m.name()).collect();
    let _ = writeln!(s, "methods: {}", methods.join(", "));
    let _ = writeln!(
        s,
        "deployments: {}, iterations: {}, master seed: {}, thresholds: {} points",
        spec.mc_deployments,
        spec.mc_iters,
        spec.master_seed,
        spec.grid().len()
    );
    let _ = writeln!(s, "max |OP_method - OP_simulated| over OP_simulated in [{}, {}]:", BAND.0, BAND.1);
    for p in &result.points {
        let cfg = &p.point.cfg;
        let _ = writeln!(
            s,
            "\npoint {} ({} = {}): M = {}, N = {}, K = {}, {}",
            p.point.index,
            spec.sweep_axis,
            fmt_opt(p.point.value),
            cfg.num_aps,
            cfg.antennas_per_ap,
            cfg.num_users,
            cfg.pilot_mode
        );
        for m in ANALYTIC.iter().filter(|m| spec.methods.contains(m)) {
            let dev = match p.system.max_deviation(*m) {
                Some(v) => format!("{v:.4}"),
                None if !p.system.op.contains_key(m) => "unavailable".into(),
                None => "no simulated point in band".into(),
            };
            let _ = writeln!(s, "  {:<14} {dev}", m.name());
        }
        if let (Some(sim), Some(uatf)) = (p.system.rate_simulated, p.system.rate_uatf) {
            let _ = writeln!(s, "  rate: simulated {sim:.4}, uatf {uatf:.4} bit/s/Hz");
        }
        for note in &p.annotations {
            let _ = writeln!(s, "  note: {note}");
        }
    }
    s
}

/// Writes `point_NNN.csv`, `point_NNN_users.csv`, `summary.csv` and
/// `report.txt` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    for p in &result.points {
        fs::write(dir.join(format!("point_{:03}.csv", p.point.index)), point_csv(result, p))?;
        fs::write(dir.join(format!("point_{:03}_users.csv", p.point.index)), users_csv(result, p))?;
    }
    fs::write(dir.join("summary.csv"), summary_csv(result))?;
    fs::write(dir.join("report.txt"), report_text(result))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::SweepAxis;

    fn tiny() -> ExperimentSpec {
        let mut spec = ExperimentSpec {
            base: SystemConfig { num_aps: 6, antennas_per_ap: 2, num_users: 3, tau_p: 3, ..Default::default() },
            thresholds_db: vec![-20.0, -10.0, 0.0, 10.0],
            mc_deployments: 3,
            mc_iters: 300,
            ..Default::default()
        };
        spec.methods.insert(Method::Udr);
        spec
    }

    #[test]
    fn columns_follow_methods() {
        let r = compute(&tiny()).unwrap();
        let p = &r.points[0];
        assert!(p.annotations.is_empty(), "{:?}", p.annotations);
        assert_eq!(p.per_user.len(), 3);
        let csv = point_csv(&r, p);
        let first = csv.lines().nth(1).unwrap();
        assert_eq!(first.split(',').count(), CURVE_COLUMNS.len());
        assert!(first.ends_with(",,"), "{first}");
        assert!(p.system.rate_uatf.is_some());
    }

    #[test]
    fn system_curve_is_the_user_average() {
        let r = compute(&tiny()).unwrap();
        let p = &r.points[0];
        for m in [Method::Mc, Method::Udr] {
            for j in 0..4 {
                let mean = p.per_user.iter().map(|c| c.op[&m][j]).sum::<f64>() / 3.0;
                assert!((mean - p.system.op[&m][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deviation_only_in_band() {
        let mut c = Curves::default();
        c.op.insert(Method::Mc, vec![0.0, 0.5, 1.0]);
        c.op.insert(Method::Lognormal, vec![0.3, 0.55, 0.2]);
        assert!((c.max_deviation(Method::Lognormal).unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(c.max_deviation(Method::Udr), None);
    }

    #[test]
    fn sweep_writes_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec {
            sweep_axis: SweepAxis::K,
            sweep_values: vec![2.0, 3.0],
            output_path: dir.path().to_path_buf(),
            mc_deployments: 2,
            ..tiny()
        };
        let r = run_experiment(&spec).unwrap();
        assert_eq!(r.points.len(), 2);
        for f in ["point_000.csv", "point_001.csv", "point_001_users.csv", "summary.csv", "report.txt"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 3);
    }
}
