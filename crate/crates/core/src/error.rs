use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("resampling would collapse axis {axis} to zero voxels")]
    DegenerateAxis { axis: usize },

    #[error("payload size mismatch for {path}: sidecar declares {expected} bytes, found {found}")]
    PayloadSize {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("sidecar {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("contour needs at least 3 points, got {0}")]
    ContourTooShort(usize),

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{0}")]
    Config(String),

    /// Input required by a stage is absent (a missing file or an earlier stage not run).
    #[error("{0}")]
    MissingInput(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit status: 2 config, 3 input, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) => 2,
            Error::NonFinite(_) | Error::ZeroVariance(_) => 4,
            _ => 3,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
