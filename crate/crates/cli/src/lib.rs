//! Configuration-driven experiment runner: single runs, parameter sweeps,
//! spectra and assumption checks, with CSV and `key = value` output.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig};
pub use report::RunReport;
pub use runner::{check, evaluate, run, spectrum_only, sweep, write_sweep_csv, RunError, SweepAxis, SweepRow};
