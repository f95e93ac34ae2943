//! Library side of the `flexreg` command: configuration and runners.

// `!(x > 0.0)` rejects NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{parse_alphas, ConfigError, PartialConfig, PkSpec, Problem, ProblemKind, RunConfig, Solver};
pub use run::{
    run_duality_check, run_experiment, run_irl1_demo, DualityReport, ExperimentOutcome, Irl1DemoReport,
    Irl1DemoSettings, RunError,
};
