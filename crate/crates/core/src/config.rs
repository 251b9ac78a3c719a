//! System parameters and the flat `key = value` configuration format.
//!
//! A config file is a sequence of lines of the form `key = value`. Everything
//! after a `#` is a comment. Keys are the lower_snake_case field names of
//! [`SystemConfig`] (and, for the CLI, of its experiment description). Keys
//! that nobody consumes are an error, so a misspelled parameter can never fall
//! back to its default silently.
//!
//! ```
//! use cellfree_outage::config::{KeyValues, PilotMode, SystemConfig};
//!
//! let text = "
//!     num_aps = 40          # M
//!     antennas_per_ap = 4   # N
//!     num_users = 10
//!     tau_p = 10
//!     pilot_mode = orthogonal
//! ";
//! let mut kv = KeyValues::parse(text).unwrap();
//! let cfg = SystemConfig::from_kv(&mut kv).unwrap();
//! kv.finish().unwrap();
//! assert_eq!(cfg.num_aps, 40);
//! assert_eq!(cfg.pilot_mode, PilotMode::Orthogonal);
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How pilot sequences are assigned to users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PilotMode {
    /// Pairwise orthogonal pilots; needs `tau_p >= K`. No contamination.
    Orthogonal,
    /// Independent, uniformly random unit-norm pilots of length `tau_p`.
    RandomContaminated,
}

impl FromStr for PilotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "orthogonal" => Ok(PilotMode::Orthogonal),
            "random_contaminated" | "random" | "contaminated" => Ok(PilotMode::RandomContaminated),
            other => Err(Error::InvalidConfig(format!(
                "pilot_mode must be `orthogonal` or `random_contaminated`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for PilotMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PilotMode::Orthogonal => "orthogonal",
            PilotMode::RandomContaminated => "random_contaminated",
        })
    }
}

/// Every scalar parameter of one network.
///
/// Defaults reproduce the propagation parameters used throughout the crate's
/// examples: 1.9 GHz carrier, 20 MHz bandwidth, 9 dB noise figure, antenna
/// heights 15 m / 1.65 m, 8 dB shadowing and 100 mW pilot and data powers,
/// with a 1 km x 1 km area.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// M, number of access points.
    pub num_aps: usize,
    /// N, antennas per access point.
    pub antennas_per_ap: usize,
    /// K, number of single-antenna users.
    pub num_users: usize,
    /// D, side of the square deployment region in km.
    pub area_side_km: f64,
    /// Pilot length in samples.
    pub tau_p: usize,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    /// Standard deviation of log-normal shadowing in dB. Zero disables it.
    pub shadow_std_db: f64,
    /// Pilot transmit power in W (before noise normalisation).
    pub tx_power_pilot_w: f64,
    /// Uplink data transmit power in W (before noise normalisation).
    pub tx_power_uplink_w: f64,
    pub pilot_mode: PilotMode,
    /// Inner breakpoint of the three-slope path loss, km.
    pub pathloss_d0_km: f64,
    /// Outer breakpoint of the three-slope path loss, km.
    pub pathloss_d1_km: f64,
    /// Put all antennas on a single site at the centre of the area
    /// (collocated massive MIMO with `num_aps * antennas_per_ap` antennas).
    pub collocated: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            num_aps: 80,
            antennas_per_ap: 4,
            num_users: 10,
            area_side_km: 1.0,
            tau_p: 10,
            carrier_freq_hz: 1.9e9,
            bandwidth_hz: 20e6,
            noise_figure_db: 9.0,
            ap_height_m: 15.0,
            ue_height_m: 1.65,
            shadow_std_db: 8.0,
            tx_power_pilot_w: 0.1,
            tx_power_uplink_w: 0.1,
            pilot_mode: PilotMode::Orthogonal,
            pathloss_d0_km: 0.01,
            pathloss_d1_km: 0.05,
            collocated: false,
        }
    }
}

impl SystemConfig {
    /// Config keys understood by [`SystemConfig::from_kv`].
    pub const KEYS: &'static [&'static str] = &[
        "num_aps",
        "antennas_per_ap",
        "num_users",
        "area_side_km",
        "tau_p",
        "carrier_freq_hz",
        "bandwidth_hz",
        "noise_figure_db",
        "ap_height_m",
        "ue_height_m",
        "shadow_std_db",
        "tx_power_pilot_w",
        "tx_power_uplink_w",
        "pilot_mode",
        "pathloss_d0_km",
        "pathloss_d1_km",
        "collocated",
    ];

    /// Total antenna count M*N.
    pub fn total_antennas(&self) -> usize {
        self.num_aps * self.antennas_per_ap
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_aps == 0 || self.antennas_per_ap == 0 || self.num_users == 0 || self.tau_p == 0 {
            return bad("num_aps, antennas_per_ap, num_users and tau_p must all be >= 1".into());
        }
        let positive = [
            ("area_side_km", self.area_side_km),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("ap_height_m", self.ap_height_m),
            ("ue_height_m", self.ue_height_m),
            ("tx_power_pilot_w", self.tx_power_pilot_w),
            ("tx_power_uplink_w", self.tx_power_uplink_w),
            ("pathloss_d0_km", self.pathloss_d0_km),
            ("pathloss_d1_km", self.pathloss_d1_km),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.shadow_std_db.is_finite() && self.shadow_std_db >= 0.0) {
            return bad(format!("shadow_std_db must be >= 0, got {}", self.shadow_std_db));
        }
        if !self.noise_figure_db.is_finite() {
            return bad("noise_figure_db must be finite".into());
        }
        if self.pathloss_d0_km >= self.pathloss_d1_km {
            return bad(format!(
                "pathloss_d0_km ({}) must be below pathloss_d1_km ({})",
                self.pathloss_d0_km, self.pathloss_d1_km
            ));
        }
        if self.pilot_mode == PilotMode::Orthogonal && self.tau_p < self.num_users {
            return bad(format!(
                "orthogonal pilots need tau_p >= num_users (tau_p = {}, num_users = {})",
                self.tau_p, self.num_users
            ));
        }
        Ok(())
    }

    /// Overrides defaults with whatever [`SystemConfig::KEYS`] are present in
    /// `kv` (consuming them), then validates.
    pub fn from_kv(kv: &mut KeyValues) -> Result<Self> {
        let mut cfg = SystemConfig::default();
        cfg.update_from_kv(kv)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`SystemConfig::from_kv`] but starting from `self`; does not validate.
    pub fn update_from_kv(&mut self, kv: &mut KeyValues) -> Result<()> {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = kv.take_parsed(stringify!($field))? {
                    self.$field = v;
                }
            };
        }
        take!(num_aps);
        take!(antennas_per_ap);
        take!(num_users);
        take!(area_side_km);
        take!(tau_p);
        take!(carrier_freq_hz);
        take!(bandwidth_hz);
        take!(noise_figure_db);
        take!(ap_height_m);
        take!(ue_height_m);
        take!(shadow_std_db);
        take!(tx_power_pilot_w);
        take!(tx_power_uplink_w);
        take!(pilot_mode);
        take!(pathloss_d0_km);
        take!(pathloss_d1_km);
        take!(collocated);
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed `key = value` pairs. Consumers [`take`](KeyValues::take) the keys they
/// understand; [`finish`](KeyValues::finish) rejects anything left over.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigParse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
                return Err(Error::ConfigParse { line, message: format!("invalid key `{key}`") });
            }
            let entry = Entry { value: value.trim().to_string(), line };
            if entries.insert(key.to_string(), entry).is_some() {
                return Err(Error::ConfigParse { line, message: format!("duplicate key `{key}`") });
            }
        }
        Ok(KeyValues { entries })
    }

    /// Sets (or replaces) `key` from the environment variable
    /// `{prefix}{KEY}` for every key in `keys`, e.g. `CELLFREE_NUM_APS`.
    pub fn overlay_env(&mut self, prefix: &str, keys: &[&str]) {
        for key in keys {
            let var = format!("{prefix}{}", key.to_ascii_uppercase());
            if let Ok(value) = std::env::var(&var) {
                self.set(key, value.trim());
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), Entry { value: value.to_string(), line: 0 });
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|e| e.value)
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| Error::ConfigParse {
                line: e.line,
                message: format!("bad value `{}` for `{key}`: {err}", e.value),
            }),
        }
    }

    /// Errors on the first unconsumed key.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_keys().next() {
            Some(key) => Err(Error::UnknownKey(key)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn orthogonal_needs_enough_pilots() {
        let cfg = SystemConfig { tau_p: 4, num_users: 5, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = SystemConfig { pilot_mode: PilotMode::RandomContaminated, ..cfg };
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut kv = KeyValues::parse("num_aps = 3\nnum_ap = 4\n").unwrap();
        let cfg = SystemConfig::from_kv(&mut kv).unwrap();
        assert_eq!(cfg.num_aps, 3);
        assert_eq!(kv.finish(), Err(Error::UnknownKey("num_ap".into())));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = KeyValues::parse("# header\nnum_aps 3\n").unwrap_err();
        assert_eq!(err, Error::ConfigParse { line: 2, message: "expected `key = value`, got `num_aps 3`".into() });
        let mut kv = KeyValues::parse("\n\nnum_aps = three").unwrap();
        let err = SystemConfig::from_kv(&mut kv).unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 3, .. }));
        assert!(KeyValues::parse("a = 1\na = 2").is_err());
    }

    #[test]
    fn pilot_mode_round_trips() {
        for mode in [PilotMode::Orthogonal, PilotMode::RandomContaminated] {
            assert_eq!(mode.to_string().parse::<PilotMode>().unwrap(), mode);
        }
        assert!("bogus".parse::<PilotMode>().is_err());
    }

    #[test]
    fn env_overlay_replaces_values() {
        let mut kv = KeyValues::parse("num_aps = 3").unwrap();
        std::env::set_var("CFTEST_OVERLAY_NUM_APS", "7");
        kv.overlay_env("CFTEST_OVERLAY_", SystemConfig::KEYS);
        std::env::remove_var("CFTEST_OVERLAY_NUM_APS");
        assert_eq!(SystemConfig::from_kv(&mut kv).unwrap().num_aps, 7);
    }
}
