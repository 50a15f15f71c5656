use thiserror::Error;

/// Errors raised by the tower, ensemble, spectral and diagnostic routines.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("construction error at stage {stage}: {message}")]
    Construction { stage: usize, message: String },

    #[error("invariant violation in {module} at stage {stage}: {message}")]
    Invariant {
        module: &'static str,
        stage: usize,
        message: String,
    },

    #[error("window empty: no n_k exceeds L = {0}")]
    WindowEmpty(String),

    #[error("shift exceeds tower height: n = {shift}, h = {height}")]
    ShiftExceedsHeight { shift: u64, height: String },

    #[error("tower of height {0} is too tall for an explicit level indicator")]
    TowerTooTall(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn is_invariant(&self) -> bool {
        matches!(self, Error::Invariant { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
