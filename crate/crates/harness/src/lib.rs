//! Experiment orchestration for `coop-maddpg`: configuration files, per-seed
//! training runs with metrics CSVs and checkpoints, baseline-versus-bonus
//! comparison reports, and SVG reward-curve plots.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod plot;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("{path}, line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("comparison confounded: {0}")]
    Confound(String),
    #[error(transparent)]
    Core(#[from] coop_maddpg::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |cause| HarnessError::Io {
        path: path.to_path_buf(),
        cause,
    }
}

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::ExperimentConfig;
pub use experiment::{compare, run_experiment, run_seed, ComparisonReport, RunArtifacts};
pub use metrics::MetricsTable;
pub use plot::emit_plots;
