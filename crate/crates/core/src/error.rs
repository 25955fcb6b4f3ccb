use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of the retrieval pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("cannot parse {column:?} at data row {row}: {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column {0:?} not found")]
    MissingColumn(String),

    #[error("unknown sensor {0:?}")]
    UnknownSensor(String),

    #[error("operation would leave an empty series: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range ({valid})")]
    OutOfRange { index: usize, valid: String },

    #[error("series has no labels")]
    MissingLabels,

    #[error("not enough eligible segments: requested {requested}, available {available}")]
    NotEnough { requested: usize, available: usize },

    #[error("non-finite gradient at epoch {epoch}, iteration {iteration} (loss {loss})")]
    Diverged {
        epoch: usize,
        iteration: usize,
        loss: f64,
    },

    #[error("value {value} at component {index} outside [-1, 1]; affine rescale requires normalized inputs")]
    RescaleRange { index: usize, value: f64 },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("metadata: {0}")]
    Metadata(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
