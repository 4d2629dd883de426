//! Configuration file loading.
//!
//! All on-disk configuration is TOML with unknown keys rejected: a
//! misspelled field aborts the run with a pointed error instead of being
//! silently ignored.

use std::path::Path;

use thiserror::Error;

use crate::inner::InnerProblem;

/// Errors raised while loading configuration files. These map to exit
/// code 1 in the command-line tool.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid configuration in {path}: {message}")]
    Invalid { path: String, message: String },
}

fn read_to_string(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads one inner-problem instance from a TOML file and validates it.
pub fn load_problem(path: &Path) -> Result<InnerProblem, ConfigError> {
    let text = read_to_string(path)?;
    let problem: InnerProblem = toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source: Box::new(source),
    })?;
    problem.validate().map_err(|e| ConfigError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(problem)
}
