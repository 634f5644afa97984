//! Experiment harness: configuration, checkpoints, output files and the
//! drivers behind each CLI subcommand.

pub mod config;
pub mod experiments;
pub mod output;
pub mod snapshot;

pub use config::RunConfig;
pub use experiments::{displacement_ensemble, EnsembleLayout};
pub use output::{CsvTable, OutputDir};
pub use snapshot::Snapshot;
