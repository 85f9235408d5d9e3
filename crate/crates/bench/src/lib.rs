//! Config-driven experiment runner for `nextframe`: variant matrices,
//! timestep sweeps, consistency checks and checkpoint prediction.

pub mod artifacts;
pub mod check;
pub mod config;
pub mod error;
pub mod predict;
pub mod run;
pub mod sweep;

pub use check::check_dir;
pub use config::{DataSource, ExperimentConfig, Variant};
pub use error::{BenchError, Result};
pub use predict::predict_from_checkpoint;
pub use run::{output_dir, run_experiment, RunReport, VariantResult};
pub use sweep::{timestep_sweep, SweepReport};

/// Environment variable overriding the configured output directory.
pub const OUT_DIR_ENV: &str = "NEXTFRAME_OUT_DIR";
