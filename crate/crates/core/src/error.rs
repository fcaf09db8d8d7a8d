use thiserror::Error;

use crate::baselines::FitError;
use crate::evalharness::EvalError;
use crate::lstm::LstmError;
use crate::marketdata::DataError;
use crate::qrh::QrhError;
use crate::roughvol::RoughVolError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error joining the per-module error types.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    RoughVol(#[from] RoughVolError),
    #[error(transparent)]
    Qrh(#[from] QrhError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error on {path}: {message}")]
    Serde { path: String, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn serde(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Serde {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }
}
