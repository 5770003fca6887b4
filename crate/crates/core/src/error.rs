use thiserror::Error;

/// Errors produced anywhere in the clustering toolkit.
#[derive(Debug, Error)]
pub enum ApcError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("negative value {value} at row {row}, column {col}")]
    NegativeValue { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("row index {index} out of range for {n_rows} rows")]
    RowOutOfRange { index: usize, n_rows: usize },

    #[error("precision is undefined: the data has no active neurons")]
    UndefinedMetric,

    #[error("assignment error: {0}")]
    Assignment(String),

    #[error("empty clusters need reseeding: {0:?}")]
    EmptyClusters(Vec<usize>),

    #[error("infeasible capacity: {capacity} x {k} clusters cannot hold {n_rows} rows")]
    InfeasibleCapacity {
        capacity: usize,
        k: usize,
        n_rows: usize,
    },

    #[error("numeric overflow in {0}")]
    Overflow(&'static str),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("value error at row {row}, column {col}: {message}")]
    Domain {
        row: usize,
        col: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ApcError {
    /// True for errors caused by invalid user-provided parameters or data
    /// shape, as opposed to runtime or I/O failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ApcError::InvalidConfig(_)
                | ApcError::DimensionMismatch { .. }
                | ApcError::ShapeMismatch { .. }
                | ApcError::InfeasibleCapacity { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, ApcError>;
