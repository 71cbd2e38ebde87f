use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("grid of {rows}x{cols} patches exceeds the 64-patch capacity")]
    GridCapacity { rows: usize, cols: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("oracle `{model}` failed: {message}")]
    Oracle { model: String, message: String },

    #[error("exhaustive minimality check on {0} patches (limit 20)")]
    ExhaustiveTooLarge(usize),

    #[error("grid of {patches} patches is too large for brute-force enumeration (limit {limit})")]
    BruteForceTooLarge { patches: usize, limit: usize },

    #[error("degenerate calibration for `{model}`: top-1 average {top1} <= baseline average {baseline}")]
    DegenerateCalibration {
        model: String,
        top1: f64,
        baseline: f64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("missing attribution map for generator `{generator}` on image `{image}`")]
    MissingMap { generator: String, image: String },

    #[error("embedding needs at least {needed} models, got {got}")]
    TooFewModels { needed: usize, got: usize },

    #[error("kernel matrix is not finite")]
    NonFiniteKernel,

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("attribution value {value} at index {index} is outside [0, 1]")]
    AttributionRange { index: usize, value: f32 },

    #[error("malformed attribution file: {0}")]
    MalformedAttribution(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("image decode error: {0}")]
    Decode(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn oracle(model: impl Into<String>, message: impl ToString) -> Self {
        Error::Oracle {
            model: model.into(),
            message: message.to_string(),
        }
    }
}
