//! Experiment orchestration: configuration files, training runs,
//! parameter sweeps, enumeration-oracle runs, and report generation.
//!
//! Everything here is deterministic given the config and seed: training
//! derives one independent random stream per iteration (so interrupted
//! runs resume onto the exact stream sequence of an uninterrupted run),
//! and evaluation uses a fixed held-out channel set seeded separately
//! from training.

pub mod config;
pub mod csvio;
pub mod experiment;
pub mod metrics;
pub mod report;
pub mod sweep;
pub mod train;

pub use config::{load_problem, ConfigError};
pub use csvio::CsvError;
pub use experiment::{load_experiment, ExperimentConfig, SweepAxis};
pub use metrics::{read_metrics, MetricsRow};
pub use report::run_report;
pub use sweep::{run_oracle, run_sweep, EvalSummary};
pub use train::{run_train, run_train_seeds, TrainOutcome};

use std::path::Path;

use thiserror::Error;

use crate::agent::AgentError;
use crate::env::EnvError;
use crate::inner::InnerError;

/// Orchestration-layer failures.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing checkpoint {path}; train first or enable sweep.train_fresh")]
    MissingCheckpoint { path: String },
    #[error("schema mismatch in {path}: {detail}")]
    SchemaMismatch { path: String, detail: String },
    #[error("no input rows to aggregate")]
    EmptyInput,
}

impl HarnessError {
    /// True when the underlying cause is a solver breakdown (iteration
    /// cap), which maps to its own exit code in the CLI.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            HarnessError::Env(EnvError::Solver(InnerError::IterationCap { .. }))
        )
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}
