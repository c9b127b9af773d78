use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape { op: &'static str, shapes: Vec<Vec<usize>> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("backward requires a scalar output, node {node} has shape {shape:?}")]
    NonScalar { node: usize, shape: Vec<usize> },

    #[error("non-finite value encountered at node {node} during {phase}")]
    NonFinite { node: usize, phase: &'static str },

    #[error("training diverged: NaN loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("conditional mutual information is infinite: {0}")]
    InfiniteCmi(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("tolerance breach in {count} row(s): {detail}")]
    Tolerance { count: usize, detail: String },

    #[error("missing artifact {}", .0.display())]
    Missing(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), reason: reason.into() }
    }

    /// Process exit code used by the experiment runner.
    ///
    /// 2 for invalid input, 3 for numerical failures, 4 for tolerance breaches.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation { .. } | Error::Shape { .. } | Error::Missing(_) => 2,
            Error::Json(_) | Error::Csv(_) | Error::Io(_) => 2,
            Error::Tolerance { .. } => 4,
            Error::NonScalar { .. }
            | Error::NonFinite { .. }
            | Error::Diverged { .. }
            | Error::Numerical(_)
            | Error::InfiniteCmi(_)
            | Error::UndefinedMetric(_) => 3,
        }
    }
}
