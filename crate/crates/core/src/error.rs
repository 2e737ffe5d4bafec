use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error in {path}:{line}: {msg}")]
    Format { path: PathBuf, line: u64, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("optimization failed after {epochs} epochs (loss {loss}, step {step}): {msg}")]
    Optimization {
        epochs: usize,
        loss: f64,
        step: f64,
        msg: String,
    },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad input or configuration rather than a
    /// runtime failure. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            SimError::Config(_) | SimError::Format { .. } | SimError::Data(_) | SimError::UnknownPreset(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
