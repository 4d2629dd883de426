//! CSV emission. Every file is UTF-8 with a fixed header row; column sets
//! are part of the tool's external contract and only grow, never reorder.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::inner::{Allocation, InnerProblem};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode {path}: {source}")]
    Encode {
        path: String,
        #[source]
        source: Box<csv::Error>,
    },
}

fn encode_err(path: &Path) -> impl FnOnce(csv::Error) -> CsvError + '_ {
    move |source| CsvError::Encode {
        path: path.display().to_string(),
        source: Box::new(source),
    }
}

/// Writes a whole table of serializable rows, replacing the file. The
/// header row comes from the row type's field names.
pub fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CsvError> {
    let mut writer = csv::Writer::from_path(path).map_err(encode_err(path))?;
    for row in rows {
        writer.serialize(row).map_err(encode_err(path))?;
    }
    writer.flush().map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// One row of an allocation CSV.
#[derive(Debug, Serialize)]
struct AllocationRow {
    user: usize,
    e1_joules: f64,
    e2_joules: f64,
    t1_seconds: f64,
    t2_seconds: f64,
    rate_bits_per_hz: f64,
}

/// Writes a per-user allocation table:
/// `user,e1_joules,e2_joules,t1_seconds,t2_seconds,rate_bits_per_hz`.
pub fn write_allocation_csv(
    path: &Path,
    problem: &InnerProblem,
    allocation: &Allocation,
) -> Result<(), CsvError> {
    let mut writer = csv::Writer::from_path(path).map_err(encode_err(path))?;
    for user in 0..problem.n_users() {
        writer
            .serialize(AllocationRow {
                user,
                e1_joules: allocation.e1[user],
                e2_joules: allocation.e2[user],
                t1_seconds: allocation.t1[user],
                t2_seconds: allocation.t2[user],
                rate_bits_per_hz: allocation.rate(problem, user),
            })
            .map_err(encode_err(path))?;
    }
    writer.flush().map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}
