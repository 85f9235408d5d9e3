use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Invalid experiment config; `path` names the offending field, e.g.
    /// `variant[2].epochs`.
    #[error("{path}: {reason}")]
    Config { path: String, reason: String },
    #[error(transparent)]
    Data(nextframe::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    /// Artifacts of a run directory disagree with each other.
    #[error("run check failed with {} problem(s):\n  {}", .0.len(), .0.join("\n  "))]
    Inconsistent(Vec<String>),
    #[error("{failed} of {total} variant(s) failed")]
    VariantsFailed { failed: usize, total: usize },
}

impl BenchError {
    pub fn config(path: impl Into<String>, reason: impl ToString) -> Self {
        BenchError::Config {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        BenchError::Csv {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 config error, 2 data error, 3 failed variants.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config { .. } => 1,
            BenchError::Data(_)
            | BenchError::Io { .. }
            | BenchError::Csv { .. }
            | BenchError::Inconsistent(_) => 2,
            BenchError::VariantsFailed { .. } => 3,
        }
    }
}

impl From<nextframe::Error> for BenchError {
    fn from(e: nextframe::Error) -> Self {
        BenchError::Data(e)
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
