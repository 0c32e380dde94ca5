use std::path::PathBuf;

use thiserror::Error;

use crate::flow::FlowTrajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    /// An iterative solver ran out of iterations. Carries the last iterate.
    #[error("{op} did not converge in {iterations} iterations (last estimate {estimate})")]
    NoConvergence {
        op: &'static str,
        iterations: usize,
        estimate: f64,
        vector: Vec<f64>,
    },

    /// Non-finite state during integration; carries what was sampled so far.
    #[error("gradient flow diverged at t = {time}")]
    FlowDiverged {
        time: f64,
        partial: Option<Box<FlowTrajectory>>,
    },

    #[error("learning-rate tuning failed: {0}")]
    TuningFailed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: no rows")]
    Empty { path: PathBuf },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
