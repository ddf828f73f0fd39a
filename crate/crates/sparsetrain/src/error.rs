use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("cannot parse config: {0}")]
    Parse(String),

    #[error("run `{run}` failed: {source}")]
    Run {
        run: String,
        #[source]
        source: sparsetrain_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("report is missing field `{0}`")]
    MissingField(&'static str),

    #[error("report error: {0}")]
    Report(String),

    #[error("verification failed: {0}")]
    Verify(String),
}

impl HarnessError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config { field: field.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit status for this error: 1 for bad configuration, 3 for a
    /// failed verification, 2 for everything that goes wrong while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config { .. } | HarnessError::Parse(_) => 1,
            HarnessError::Verify(_) => 3,
            _ => 2,
        }
    }
}
