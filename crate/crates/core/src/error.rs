use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the refinement pipeline.
///
/// The variants are grouped by how the command-line front end reports them:
/// input problems, configuration problems and runtime failures map onto
/// distinct exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("topology error: {0}")]
    Topology(String),

    #[error("degenerate limb: {0}")]
    DegenerateLimb(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("input error: {0}")]
    Input(String),

    #[error("frame rejected: {0}")]
    FrameRejected(String),

    #[error("non-finite value in {term} cost term")]
    NonFinite { term: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("script error: {0}")]
    Script(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 input error, 2 config error, 3 runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Record { .. } | Error::Input(_) | Error::Json(_) | Error::Script(_) => 1,
            Error::Config(_) | Error::Topology(_) => 2,
            Error::Io { .. }
            | Error::DegenerateLimb(_)
            | Error::FrameRejected(_)
            | Error::NonFinite { .. }
            | Error::Contract(_) => 3,
        }
    }
}
