//! Configuration, orchestration and persistence for simulation runs.

pub mod config;
pub mod csv_io;
pub mod eta_c;
pub mod presets;
pub mod run;

pub use config::{load_config, ConfigError, ExperimentConfig, Mode};
pub use run::{run, simulate, ChildOutcome, RunError, RunSummary, SCHEMA_VERSION};
