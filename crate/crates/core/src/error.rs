use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: need at least {needed} frames, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("validation failed for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("frame {frame}: {message}")]
    Ordering { frame: usize, message: String },

    #[error("missing joints: {}", .0.join(", "))]
    MissingJoints(Vec<String>),

    #[error("distance {distance_m} m is unreachable: {reason}")]
    UnreachableDistance { distance_m: f64, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("regressor values are all equal; slope is not identifiable")]
    CollinearInput,

    #[error("no usable training windows")]
    EmptyDataset,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("warm start needs {needed} frames but the demonstration has {available}")]
    InsufficientWarmStart { needed: usize, available: usize },

    #[error("schema mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error in {}: {message}", .path.display())]
    Csv { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Stable machine-readable identifier, printed by the CLI next to the message.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Ordering { .. } => "ordering",
            Error::MissingJoints(_) => "missing-joint",
            Error::UnreachableDistance { .. } => "unreachable-distance",
            Error::Domain(_) => "domain",
            Error::CollinearInput => "collinear-input",
            Error::EmptyDataset => "empty-dataset",
            Error::Contract(_) => "contract",
            Error::InsufficientWarmStart { .. } => "insufficient-warmstart",
            Error::SchemaMismatch { .. } => "schema-mismatch",
            Error::Io { .. } => "io",
            Error::MissingInput(_) => "missing-input",
            Error::Config(_) => "config",
            Error::Csv { .. } => "csv",
        }
    }

    /// Process exit status for the CLI. Zero is reserved for success.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::MissingInput(_) => 3,
            Error::SchemaMismatch { .. } => 4,
            Error::Io { .. } | Error::Csv { .. } => 5,
            Error::Parse { .. }
            | Error::Validation { .. }
            | Error::Ordering { .. }
            | Error::MissingJoints(_) => 6,
            _ => 1,
        }
    }
}
