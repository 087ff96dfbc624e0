use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// [`Error::kind`] yields the stable diagnostic name (`FormatError`,
/// `AlignmentError`, ...) printed by the command-line tool.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{0}")]
    Format(String),

    #[error("{0}")]
    Truncation(String),

    #[error("non-finite value at flat index {index} in {context}")]
    Data { context: String, index: usize },

    #[error("{0}")]
    Alignment(String),

    #[error("{0}")]
    Manifest(String),

    #[error("{0}")]
    Dimension(String),

    #[error("{0}")]
    Rank(String),

    #[error("{0}")]
    Degenerate(String),

    #[error("{0}")]
    Index(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Partition(String),

    #[error("coreset is empty")]
    Empty,

    #[error("{0}")]
    Report(String),

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("internal assertion failed: {0}")]
    Internal(String),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Io { .. } => "IoError",
            Error::Format(_) => "FormatError",
            Error::Truncation(_) => "TruncationError",
            Error::Data { .. } => "DataError",
            Error::Alignment(_) => "AlignmentError",
            Error::Manifest(_) => "ManifestError",
            Error::Dimension(_) => "DimensionError",
            Error::Rank(_) => "RankError",
            Error::Degenerate(_) => "DegenerateError",
            Error::Index(_) => "IndexError",
            Error::Config(_) => "ConfigError",
            Error::Partition(_) => "PartitionError",
            Error::Empty => "EmptyError",
            Error::Report(_) => "ReportError",
            Error::Json { .. } => "JsonError",
            Error::Internal(_) => "InternalError",
            Error::Stage { .. } => unreachable!("root() strips stage wrappers"),
        }
    }

    /// Process exit status: 1 usage/configuration, 2 data, 3 internal assertion.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
