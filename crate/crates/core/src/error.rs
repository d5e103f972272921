use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix data has {len} entries, expected {rows}x{cols}")]
    Shape { rows: usize, cols: usize, len: usize },

    #[error("ragged matrix: row {row} has {found} entries, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The support pattern forbids `phi_x(0)[i, i]`, which `phi_x(0) = I` forces to one.
    #[error("support pattern masks phi_x(0)[{state}, {state}] but phi_x(0) = I is forced")]
    InfeasiblePattern { state: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
