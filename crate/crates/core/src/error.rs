use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shard {shard}: {source}")]
    ShardIo {
        shard: usize,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("graph is empty")]
    EmptyGraph,

    #[error("node id {id} out of range for {num_nodes} nodes")]
    NodeOutOfRange { id: u64, num_nodes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expected {expected:.0} edges exceeds the capacity budget of {budget}")]
    Capacity { expected: f64, budget: u64 },

    #[error("non-finite value at embedding row {row}: {message}")]
    Numeric { row: u32, message: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("missing report in run directory {0}")]
    MissingReport(PathBuf),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 validation, 2 runtime, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Capacity { .. } => 1,
            Error::Io { .. } | Error::ShardIo { .. } | Error::Format { .. } => 3,
            Error::MissingReport(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
