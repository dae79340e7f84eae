//! Configured runs, parameter sweeps and their reports.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{Algorithm, DatasetSpec, ExperimentConfig, InitKind, SweepParam, SweepSpec};
pub use report::render_report;
pub use runner::{fit_algorithm, load_dataset, run_experiment, run_sweep, write_synthetic, RunReport};
