use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] stacklab_core::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit status: 2 for configuration problems, 3 for invariant
    /// violations raised by the core, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core(e) if e.is_invariant() => 3,
            RunError::Core(_) => 2,
            RunError::Io { .. } => 1,
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json_line(&self) -> String {
        let value = match self {
            RunError::Config(msg) => json!({ "error": "config", "message": msg }),
            RunError::Core(stacklab_core::Error::Invariant { module, stage, message }) => json!({
                "error": "invariant",
                "module": module,
                "stage": stage,
                "message": message,
            }),
            RunError::Core(e) => json!({ "error": "config", "message": e.to_string() }),
            RunError::Io { .. } => json!({ "error": "io", "message": self.to_string() }),
        };
        // serde_json escapes control characters, so this is a single line.
        value.to_string()
    }
}
