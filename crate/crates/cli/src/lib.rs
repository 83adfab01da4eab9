//! Experiment harness around `wppl_core`: config files, runs, parameter
//! sweeps, trajectory validation and the weight-tuning service.

pub mod config;
pub mod generate;
pub mod run;
pub mod serve;

pub use config::{Algorithm, CliError, Loaded, Overrides, RunConfig, WpplSection};
pub use run::{execute, run, sweep, MetricsSummary, SweepParam, SweepRow};
