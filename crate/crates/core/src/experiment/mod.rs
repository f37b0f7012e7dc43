//! Config-driven runs, window sweeps and CSV/TOML output.

pub mod config;
pub mod run;

pub use config::{ExperimentConfig, WindowSpec};
pub use run::{build_problem, read_csv, run_experiment, run_with_window, sweep, write_outputs, CsvRow, RunOutcome};
