//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("parse failure at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("ragged row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("split too small: {split} split has {len} rows, need at least {needed}")]
    SplitTooSmall {
        split: &'static str,
        len: usize,
        needed: usize,
    },
    #[error("frame too short for windowing: {len} rows < window {window} + 1")]
    FrameTooShort { len: usize, window: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite tensor produced by op `{0}`")]
    NonFiniteTensor(String),
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    LossNotScalar { rows: usize, cols: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("autocorrelation coefficient out of range: |{0}| >= 1")]
    RhoOutOfRange(f64),
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),
    #[error("degenerate variance: differences have zero variance")]
    DegenerateVariance,
    #[error("too few samples: got {got}, need at least {needed}")]
    TooFewSamples { got: usize, needed: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("nonpositive baseline value {0} in relative improvement")]
    NonPositiveBaseline(f64),
    #[error("design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainDiverged { epoch: usize },
    #[error("unpaired run records: {0}")]
    UnpairedRecords(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
