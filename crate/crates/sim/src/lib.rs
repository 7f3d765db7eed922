//! Monte Carlo harness for the cell-free receivers in `cellfree-core`:
//! TOML experiment configs, seeded parallel trials, flat CSV results and
//! plot-ready series.

pub mod config;
pub mod error;
pub mod harness;
pub mod record;
pub mod seed;
pub mod series;

pub use config::{Algorithm, ExperimentConfig, Plan, RunKind, Study};
pub use error::{Result, SimError};
pub use harness::{reproduce_trial, run_experiment, simulate, write_results};
pub use record::{Results, TraceRecord, TrialKey, TrialRecord};
pub use seed::TrialSeeds;
pub use series::{build_series, emit_plot_series, Series};
