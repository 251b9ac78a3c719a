//! Experiment description and its `key = value` form.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cellfree_outage::config::{KeyValues, PilotMode, SystemConfig};
use cellfree_outage::udr::EXACT_MAX_DIMS;
use cellfree_outage::{Error, Result};

/// Prefix of the environment overrides, e.g. `CELLFREE_NUM_APS=40`.
pub const ENV_PREFIX: &str = "CELLFREE_";

/// Evaluation methods, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Mc,
    Lognormal,
    Udr,
    MmimoClosed,
    ExactSmall,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mc, Method::Lognormal, Method::Udr, Method::MmimoClosed, Method::ExactSmall];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Lognormal => "lognormal",
            Method::Udr => "udr",
            Method::MmimoClosed => "mmimo_closed",
            Method::ExactSmall => "exact_small",
        }
    }

    pub fn needs_orthogonal(self) -> bool {
        matches!(self, Method::Udr | Method::MmimoClosed | Method::ExactSmall)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{}` (expected one of mc, lognormal, udr, mmimo_closed, exact_small)", s.trim())))
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(s: &str) -> Result<BTreeSet<Method>> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::parse).collect()
}

/// Parameter varied across sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Number of users K.
    K,
    /// Number of access points M.
    M,
    /// The threshold grid itself: `sweep_values` replace `thresholds_db` and
    /// the run has a single point.
    Threshold,
    None,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "k" | "K" | "num_users" => Ok(SweepAxis::K),
            "m" | "M" | "num_aps" => Ok(SweepAxis::M),
            "threshold" | "t" | "T" => Ok(SweepAxis::Threshold),
            "none" => Ok(SweepAxis::None),
            other => Err(Error::InvalidConfig(format!("sweep_axis must be k, m, threshold or none, got `{other}`"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::K => "k",
            SweepAxis::M => "m",
            SweepAxis::Threshold => "threshold",
            SweepAxis::None => "none",
        })
    }
}

/// Parses `a, b, c` or an inclusive range `start:step:stop`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::InvalidConfig(msg);
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| bad(format!("bad range `{s}`: {e}"))))
            .collect::<Result<_>>()?;
        let [start, step, stop] = parts[..] else {
            return Err(bad(format!("a range is `start:step:stop`, got `{s}`")));
        };
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(bad(format!("range `{s}` needs step > 0 and stop >= start")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 100_000 {
            return Err(bad(format!("range `{s}` has {count} points")));
        }
        // index-based so the grid does not drift with accumulated rounding
        return Ok((0..count).map(|i| start + i as f64 * step).collect());
    }
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|e| bad(format!("bad number `{p}`: {e}"))))
        .collect()
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    /// OP threshold grid in dB, ascending.
    pub thresholds_db: Vec<f64>,
    pub methods: BTreeSet<Method>,
    /// Number of random deployments; every method averages over the same ones.
    pub mc_deployments: usize,
    /// Channel draws per deployment for `mc`.
    pub mc_iters: usize,
    pub master_seed: u64,
    /// Output directory. Empty means compute only.
    pub output_path: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base: SystemConfig::default(),
            sweep_axis: SweepAxis::None,
            sweep_values: Vec::new(),
            thresholds_db: parse_grid("-30:1:30").expect("static grid"),
            methods: [Method::Mc, Method::Lognormal].into_iter().collect(),
            mc_deployments: 20,
            mc_iters: 2000,
            master_seed: 1,
            output_path: PathBuf::new(),
        }
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// Value of the sweep axis at this point (`None` for unswept runs).
    pub value: Option<f64>,
    pub cfg: SystemConfig,
}

impl ExperimentSpec {
    /// Keys understood by [`ExperimentSpec::from_kv`] besides the
    /// [`SystemConfig::KEYS`].
    pub const KEYS: &'static [&'static str] =
        &["sweep_axis", "sweep_values", "thresholds_db", "methods", "mc_deployments", "mc_iters", "master_seed", "output_path"];

    /// Every key, system and experiment.
    pub fn all_keys() -> Vec<&'static str> {
        SystemConfig::KEYS.iter().chain(Self::KEYS).copied().collect()
    }

    /// Reads a spec from parsed key-values, rejecting unknown keys. Does not
    /// validate; see [`ExperimentSpec::validate`].
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        spec.base.update_from_kv(&mut kv)?;
        if let Some(v) = kv.take_parsed("sweep_axis")? {
            spec.sweep_axis = v;
        }
        if let Some(v) = kv.take("sweep_values") {
            spec.sweep_values = parse_grid(&v)?;
        }
        if let Some(v) = kv.take("thresholds_db") {
            spec.thresholds_db = parse_grid(&v)?;
        }
        if let Some(v) = kv.take("methods") {
            spec.methods = parse_methods(&v)?;
        }
        if let Some(v) = kv.take_parsed("mc_deployments")? {
            spec.mc_deployments = v;
        }
        if let Some(v) = kv.take_parsed("mc_iters")? {
            spec.mc_iters = v;
        }
        if let Some(v) = kv.take_parsed("master_seed")? {
            spec.master_seed = v;
        }
        if let Some(v) = kv.take("output_path") {
            spec.output_path = PathBuf::from(v);
        }
        kv.finish()?;
        Ok(spec)
    }

    /// File (if any), then `CELLFREE_*` environment variables, then
    /// `overrides` (typically from command-line flags), later sources winning.
    pub fn load(file: Option<&Path>, overrides: &[(&str, String)]) -> anyhow::Result<Self> {
        let text = match file {
            Some(p) => std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("reading {}: {e}", p.display()))?,
            None => String::new(),
        };
        let mut kv = KeyValues::parse(&text)?;
        kv.overlay_env(ENV_PREFIX, &Self::all_keys());
        for (key, value) in overrides {
            kv.set(key, value);
        }
        Ok(Self::from_kv(kv)?)
    }

    /// The configurations to evaluate, in output order.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let point = |index, value, cfg| SweepPoint { index, value, cfg };
        match self.sweep_axis {
            SweepAxis::None | SweepAxis::Threshold => Ok(vec![point(0, None, self.base.clone())]),
            SweepAxis::K | SweepAxis::M => self
                .sweep_values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if !(v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
                        return Err(Error::InvalidConfig(format!("sweep value {v} is not a positive integer")));
                    }
                    let mut cfg = self.base.clone();
                    match self.sweep_axis {
                        SweepAxis::K => cfg.num_users = v as usize,
                        _ => cfg.num_aps = v as usize,
                    }
                    Ok(point(i, Some(v), cfg))
                })
                .collect(),
        }
    }

    /// The threshold grid actually used.
    pub fn grid(&self) -> &[f64] {
        match self.sweep_axis {
            SweepAxis::Threshold => &self.sweep_values,
            _ => &self.thresholds_db,
        }
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        if self.sweep_axis != SweepAxis::None && self.sweep_values.is_empty() {
            return bad(format!("sweep_axis = {} needs sweep_values", self.sweep_axis));
        }
        let grid = self.grid();
        if grid.is_empty() {
            return bad("the threshold grid is empty".into());
        }
        if grid.iter().any(|t| t.is_nan()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("thresholds must be strictly ascending".into());
        }
        if self.mc_deployments == 0 {
            return bad("mc_deployments must be >= 1".into());
        }
        if self.methods.contains(&Method::Mc) && self.mc_iters == 0 {
            return bad("mc_iters must be >= 1".into());
        }
        for p in self.points()? {
            p.cfg.validate()?;
            for &m in &self.methods {
                if m.needs_orthogonal() && p.cfg.pilot_mode != PilotMode::Orthogonal {
                    return bad(format!("method `{m}` needs pilot_mode = orthogonal"));
                }
            }
            if self.methods.contains(&Method::MmimoClosed) && !p.cfg.collocated {
                return bad("method `mmimo_closed` needs collocated = true".into());
            }
            if self.methods.contains(&Method::ExactSmall) && p.cfg.total_antennas() > EXACT_MAX_DIMS {
                return bad(format!(
                    "method `exact_small` is limited to num_aps * antennas_per_ap <= {EXACT_MAX_DIMS} (got {})",
                    p.cfg.total_antennas()
                ));
            }
            if p.cfg.num_users < 2 && self.methods.iter().any(|m| *m != Method::Mc) {
                return bad("analytic methods need num_users >= 2".into());
            }
        }
        Ok(())
    }
}
