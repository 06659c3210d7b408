use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode index {index} out of range for {modes} modes (indices are 1-based)")]
    ModeIndex { index: usize, modes: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not unitary: max |U^dagger U - I| = {deviation:e}")]
    NotUnitary { deviation: f64 },

    #[error("{modes} modes is not a power of two; use the gamma chain network instead")]
    NotPowerOfTwo { modes: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("decode fault on mode {mode}: n/a^2 = {ratio} exceeds the physical bound of 2")]
    DecodeFault { mode: usize, ratio: f64 },

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("pgm: {0}")]
    Pgm(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ModeIndex { .. } => "mode-index",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::NotUnitary { .. } => "not-unitary",
            Error::NotPowerOfTwo { .. } => "not-power-of-two",
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::DecodeFault { .. } => "decode-fault",
            Error::UnknownStrategy { .. } => "unknown-strategy",
            Error::Pgm(_) => "pgm",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
