use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
///
/// Every variant maps onto one of the process exit codes used by the
/// command-line front end, see [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("graph already consumed by a previous backward pass")]
    GraphConsumed,

    #[error("non-finite value at coordinate {index}: {detail}")]
    NonFinite { index: usize, detail: String },

    #[error("missing parameter '{0}'")]
    MissingParam(String),

    #[error("parameter '{name}' has shape {found:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("malformed checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("vocabulary mismatch: pivot vocabulary hash {left} differs from {right}")]
    VocabMismatch { left: String, right: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::NonFinite { .. } | Error::Numeric(_) => 3,
            Error::ShapeMismatch { .. } | Error::NonScalarLoss(_) | Error::GraphConsumed => 3,
            Error::MissingParam(_)
            | Error::ParamShape { .. }
            | Error::Checkpoint { .. }
            | Error::VocabMismatch { .. }
            | Error::Data(_)
            | Error::Io { .. } => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
