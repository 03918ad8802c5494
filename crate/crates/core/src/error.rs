use thiserror::Error;

#[derive(Debug, Error)]
pub enum AsrError {
    #[error("invalid `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("level {level} outside [1, {horizon}]")]
    LevelOutOfRange { level: usize, horizon: usize },

    #[error("branch {0} outside 0..=4")]
    BranchOutOfRange(usize),

    #[error("unsupported innovation moment: {0}")]
    UnsupportedMoment(String),

    #[error("inventory {q} outside [0, {nominal}]")]
    InventoryOutOfRange { q: f64, nominal: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver failure at level {level}, node {zeta}: {reason}")]
    Solver { level: usize, zeta: i64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl AsrError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        AsrError::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, AsrError>;
