//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::calibrate::StallReport;

#[derive(Debug, Error)]
pub enum Error {
    /// A text file did not match its declared format. `line` is 1-based.
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A precondition on caller-supplied values failed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("no plane found: {0}")]
    NoPlaneFound(String),

    #[error("no floor: {0}")]
    NoFloor(String),

    #[error("room dimensions: {0}")]
    Dimensions(String),

    #[error("geometry: {0}")]
    Geometry(String),

    /// Two time series that must share a timestamp grid do not.
    #[error("series misaligned: {0}")]
    Alignment(String),

    #[error("simulation produced a non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("steady state is unbounded: zero envelope conductance with nonzero power")]
    UnboundedSteadyState,

    #[error("gradient component {index}: objective non-finite at perturbation")]
    Gradient { index: usize },

    /// Calibration found no descent direction at the starting point while the
    /// objective was still above threshold. The report carries the gradient
    /// and history for diagnosis.
    #[error("calibration stalled at rmse {:.4} °C", report.initial_rmse_c)]
    Stall { report: Box<StallReport> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
