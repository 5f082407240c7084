//! Command-line front end: run configuration, checkpoints, and the train,
//! eval and bench commands behind the `ukan` binary.

pub mod checkpoint;
pub mod config;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointError, OptimizerState, RngState};
pub use config::{ConfigError, OptimizerKind, RunConfig, TaskKind};
pub use train::{eval_checkpoint, train, MetricRow, RunError, TrainOptions, TrainOutcome};

use std::path::{Path, PathBuf};

/// Overrides applied on top of a config file by global command-line flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Reads, overrides and validates a config file.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        RunError::Config(ConfigError {
            key: "--config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })
    })?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &overrides.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}
