use std::path::PathBuf;

/// Error type shared by all codec components.
#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("truncated file {path}: expected {expected} bytes, found {actual}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt bitstream: {0}")]
    CorruptBitstream(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("empty input: {0}")]
    EmptyInput(String),
}

impl CodecError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CodecError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CodecError>;
