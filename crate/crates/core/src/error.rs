use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("size mismatch: expected {expected} bytes of payload, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("ROI {0:?} projects outside the feature map")]
    EmptyProjection(crate::imaging::Rect),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario error: {0}")]
    Spec(String),

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("homography estimation failed: {0}")]
    Estimation(String),

    #[error("degenerate homography: {0}")]
    Degenerate(String),

    #[error("missing feature map for frame {frame}: {}", path.display())]
    MissingFeatureMap { frame: u64, path: PathBuf },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}:{line}: {message}", path.display())]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
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

    /// Process exit code for the CLI: 2 for configuration or scenario
    /// problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Spec(_) | Error::UnknownStrategy { .. } | Error::Json { .. } => 2,
            _ => 3,
        }
    }
}
