//! Outage probability and ergodic rate of the cell-free massive MIMO uplink.
//!
//! Three independent routes to the same quantities:
//!
//! * [`sinr`]: Monte-Carlo simulation of the effective SINR under MMSE
//!   estimation and maximum-ratio combining,
//! * [`lognormal`]: two-step Log-normal moment matching driven by the exact
//!   moments in [`moments`],
//! * [`udr`]: the exact conditional-hypoexponential integral for orthogonal
//!   pilots, its univariate dimension reduction, and the closed form for a
//!   collocated array.
//!
//! ```
//! use cellfree_outage::prelude::*;
//!
//! let cfg = SystemConfig { num_aps: 8, num_users: 3, antennas_per_ap: 2, tau_p: 3, ..Default::default() };
//! let dep = generate_deployment(&cfg, 7).unwrap();
//! let pilots = build_pilot_book(&cfg, 7).unwrap();
//! let stats = estimation_stats(&dep, &pilots, &cfg).unwrap();
//!
//! let ms = moments_general(&stats, &dep, &cfg, 0).unwrap();
//! let fit = fit_lognormal(&ms).unwrap();
//! let op = outage_lognormal(&fit, 1.0);
//! assert!((0.0..=1.0).contains(&op));
//! ```

pub mod channel;
pub mod config;
pub mod deployment;
pub mod error;
pub mod hypoexp;
pub mod lognormal;
pub mod moments;
pub mod quadrature;
pub mod rng;
pub mod sinr;
pub mod special;
pub mod udr;

pub use error::{Error, Result};

/// Everything needed for the common workflows.
pub mod prelude {
    pub use crate::channel::{build_pilot_book, draw_channels, estimation_stats, ChannelRealization, ChannelSampler, EstimationStats, PilotBook};
    pub use crate::config::{KeyValues, PilotMode, SystemConfig};
    pub use crate::deployment::{generate_deployment, path_loss_db, Deployment};
    pub use crate::error::{Error, Result};
    pub use crate::hypoexp::{hypoexp_cdf, HypoExpParams};
    pub use crate::lognormal::{fit_lognormal, outage_lognormal, rate_bounds, rate_lognormal, rate_uatf, LogNormalParams};
    pub use crate::moments::{moments_general, moments_mmimo, moments_npc, pochhammer, MomentSet};
    pub use crate::sinr::{run_monte_carlo, sinr_sample, EmpiricalCurve, MonteCarloOutput};
    pub use crate::udr::{outage_exact_smallcase, outage_mmimo_closed_form, outage_udr, UdrOptions};
    pub use crate::{db_to_linear, linear_to_db};
}

/// Converts decibels to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear ratio to decibels.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

// The guide's code listings run as doctests of this crate, one module per
// chapter so a failure points at its chapter.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/lognormal.md")]
    mod lognormal {}
    #[doc = include_str!("../../../book/src/dimension-reduction.md")]
    mod dimension_reduction {}
    #[doc = include_str!("../../../book/src/hypoexponential.md")]
    mod hypoexponential {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
