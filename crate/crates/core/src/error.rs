//! Error types shared across the library.

use std::path::PathBuf;

/// Top-level error for every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A parameter is outside its documented domain.
    #[error("parameter error in {op}: {detail}")]
    Parameter { op: &'static str, detail: String },

    /// A forward operation produced NaN/Inf from finite inputs.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// The autodiff contract was violated (e.g. non-scalar loss).
    #[error("autodiff contract error: {0}")]
    Contract(String),

    /// Invalid geometry (degenerate boxes, empty masks).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A metric is undefined for the given inputs.
    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    /// Invalid numeric input (NaN where finite values are required).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Bad generator or training configuration.
    #[error("config error: {0}")]
    Config(String),

    /// File parse failure, with the byte offset where parsing stopped.
    #[error("parse error at byte {offset} in {path}: {detail}")]
    Parse {
        path: PathBuf,
        offset: usize,
        detail: String,
    },

    /// Checkpoint file does not start with the expected magic.
    #[error("checkpoint magic mismatch in {path}")]
    CheckpointMagic { path: PathBuf },

    /// Checkpoint payload is shorter than the header promises.
    #[error("checkpoint truncated in {path}: expected {expected} payload bytes, found {found}")]
    CheckpointTruncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    /// Checkpoint header shapes disagree with the payload layout.
    #[error("checkpoint shape mismatch in {path}: {detail}")]
    CheckpointShape { path: PathBuf, detail: String },

    /// Checkpoint format version is not supported by this build.
    #[error("unsupported checkpoint version {found} in {path}")]
    CheckpointVersion { path: PathBuf, found: u32 },

    /// Training diverged (non-finite loss), with the failing step identified.
    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dimension(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn parameter(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Parameter {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category, used by the CLI to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Dimension { .. } | Error::Parameter { .. } | Error::Config(_) => {
                ErrorCategory::Usage
            }
            Error::Parse { .. }
            | Error::CheckpointMagic { .. }
            | Error::CheckpointTruncated { .. }
            | Error::CheckpointShape { .. }
            | Error::CheckpointVersion { .. } => ErrorCategory::Format,
            Error::NonFinite { .. }
            | Error::Contract(_)
            | Error::Numeric(_)
            | Error::Diverged { .. } => ErrorCategory::Numeric,
            Error::Geometry(_) | Error::MetricUndefined(_) => ErrorCategory::Data,
            Error::Io { .. } | Error::Json(_) => ErrorCategory::Io,
        }
    }
}

/// Failure categories surfaced as distinct process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Format,
    Numeric,
    Data,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Format => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Data => 5,
            ErrorCategory::Io => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
