//! Experiment orchestration for `cellfree-outage`: config loading, sweeps
//! over the network size, CSV curves, comparison reports and the
//! verification battery behind the `cellfree` binary.

pub mod run;
pub mod spec;
pub mod verify;

pub use run::{compute, run_experiment, write_outputs, Curves, ExperimentResult, PointResult};
pub use spec::{parse_grid, parse_methods, ExperimentSpec, Method, SweepAxis, SweepPoint};
pub use verify::{verify_suite, CheckRow, Level, Tamper, VerifyReport};
