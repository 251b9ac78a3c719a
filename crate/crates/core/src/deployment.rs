//! Network geometry and large-scale fading.
//!
//! APs and users are dropped uniformly on a `D x D` square (no wrap-around).
//! The large-scale coefficient between AP `m` and user `k` is
//! `beta_mk = 10^((PL(d_mk) + sigma_sh * z_mk) / 10)` with `z_mk ~ N(0, 1)` and
//! `PL` the three-slope model of [`path_loss_db`]. Transmit powers are
//! normalised by the receiver noise power `k_B * 290 K * B * NF`.

use std::io::{self, Write};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const REFERENCE_TEMPERATURE_K: f64 = 290.0;

/// One drop of APs and users together with its large-scale fading.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    /// AP coordinates in km. Empty for deployments built with [`Deployment::from_beta`].
    pub ap_xy: Vec<[f64; 2]>,
    /// User coordinates in km. Empty for deployments built with [`Deployment::from_beta`].
    pub ue_xy: Vec<[f64; 2]>,
    /// `M x K` large-scale fading coefficients.
    pub beta: Array2<f64>,
    /// Normalised pilot SNR.
    pub rho_p: f64,
    /// Normalised uplink data SNR.
    pub rho_u: f64,
}

impl Deployment {
    /// A deployment given directly by its `M x K` fading matrix, e.g. for hand
    /// computed cases or a collocated array.
    pub fn from_beta(beta: Array2<f64>, rho_p: f64, rho_u: f64) -> Result<Self> {
        if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Invalid("beta entries must be finite and > 0".into()));
        }
        if !(rho_p > 0.0 && rho_u > 0.0) {
            return Err(Error::Invalid("rho_p and rho_u must be > 0".into()));
        }
        Ok(Deployment { ap_xy: Vec::new(), ue_xy: Vec::new(), beta, rho_p, rho_u })
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.beta.ncols()
    }

    /// Writes `ap_x,ap_y` / `ue_x,ue_y` / `beta` sections for external plotting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "ap_x,ap_y")?;
        for [x, y] in &self.ap_xy {
            writeln!(out, "{x},{y}")?;
        }
        writeln!(out, "ue_x,ue_y")?;
        for [x, y] in &self.ue_xy {
            writeln!(out, "{x},{y}")?;
        }
        writeln!(out, "beta")?;
        for row in self.beta.rows() {
            let line: Vec<String> = row.iter().map(|b| format!("{b:e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Receiver noise power in W: `k_B * T0 * bandwidth * 10^(NF/10)`.
pub fn noise_power_w(cfg: &SystemConfig) -> f64 {
    BOLTZMANN * REFERENCE_TEMPERATURE_K * cfg.bandwidth_hz * 10f64.powf(cfg.noise_figure_db / 10.0)
}

/// COST-231 Hata constant `L` in dB (frequency in MHz, heights in m):
///
/// `L = 46.3 + 33.9 log10 f - 13.82 log10 h_AP - (1.1 log10 f - 0.7) h_UE + (1.56 log10 f - 0.8)`
pub fn hata_constant_db(cfg: &SystemConfig) -> f64 {
    let lf = (cfg.carrier_freq_hz / 1e6).log10();
    46.3 + 33.9 * lf - 13.82 * cfg.ap_height_m.log10() - (1.1 * lf - 0.7) * cfg.ue_height_m + (1.56 * lf - 0.8)
}

/// Three-slope path loss in dB (a negative number) at ground distance `d_km`.
///
/// ```text
/// PL(d) = -L - 35 log10 d                      d > d1
///         -L - 15 log10 d1 - 20 log10 d        d0 < d <= d1
///         -L - 15 log10 d1 - 20 log10 d0       d <= d0
/// ```
///
/// Distances are in km. The slopes are 35, 20 and 0 dB/decade and the curve is
/// continuous at both breakpoints.
pub fn path_loss_db(d_km: f64, cfg: &SystemConfig) -> f64 {
    let l = hata_constant_db(cfg);
    let (d0, d1) = (cfg.pathloss_d0_km, cfg.pathloss_d1_km);
    if d_km > d1 {
        -l - 35.0 * d_km.log10()
    } else if d_km > d0 {
        -l - 15.0 * d1.log10() - 20.0 * d_km.log10()
    } else {
        -l - 15.0 * d1.log10() - 20.0 * d0.log10()
    }
}

/// Drops APs and users and computes `beta`, `rho_p` and `rho_u`.
///
/// AP positions, user positions and the shadowing of each AP row come from
/// separate sub-streams of `seed`, each consumed in index order. Growing `M`
/// or `K` therefore keeps the existing nodes and their shadowing, so sweeps
/// over either compare nested networks. With `cfg.collocated` every AP sits at
/// the centre of the square and each user gets a single shadowing draw shared
/// by all antennas.
pub fn generate_deployment(cfg: &SystemConfig, seed: u64) -> Result<Deployment> {
    cfg.validate()?;
    let side = cfg.area_side_km;
    let (m_count, k_count) = (cfg.num_aps, cfg.num_users);
    let drop = |rng: &mut SimRng| [rng.random::<f64>() * side, rng.random::<f64>() * side];

    let ap_xy: Vec<[f64; 2]> = if cfg.collocated {
        vec![[0.5 * side, 0.5 * side]; m_count]
    } else {
        let mut rng = rng_from_seed(derive_seed(seed, 0));
        (0..m_count).map(|_| drop(&mut rng)).collect()
    };
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let ue_xy: Vec<[f64; 2]> = (0..k_count).map(|_| drop(&mut rng)).collect();

    let shadow_seed = derive_seed(seed, 2);
    let mut beta = Array2::<f64>::zeros((m_count, k_count));
    if cfg.collocated {
        let mut rng = rng_from_seed(shadow_seed);
        for k in 0..k_count {
            let z: f64 = rng.sample(StandardNormal);
            let d = distance(ap_xy[0], ue_xy[k]);
            let b = 10f64.powf((path_loss_db(d, cfg) + cfg.shadow_std_db * z) / 10.0);
            beta.column_mut(k).fill(b);
        }
    } else {
        for m in 0..m_count {
            let mut rng = rng_from_seed(derive_seed(shadow_seed, m as u64));
            for k in 0..k_count {
                let z: f64 = rng.sample(StandardNormal);
                let d = distance(ap_xy[m], ue_xy[k]);
                beta[[m, k]] = 10f64.powf((path_loss_db(d, cfg) + cfg.shadow_std_db * z) / 10.0);
            }
        }
    }
    if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::Invalid("large-scale fading underflowed; check the area and path-loss settings".into()));
    }

    let noise = noise_power_w(cfg);
    Ok(Deployment {
        ap_xy,
        ue_xy,
        beta,
        rho_p: cfg.tx_power_pilot_w / noise,
        rho_u: cfg.tx_power_uplink_w / noise,
    })
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
