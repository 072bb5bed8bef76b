use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlmmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("column {0} has zero variance")]
    DegenerateColumn(String),
    #[error("response value {value} at row {row} is outside the family's support")]
    InvalidResponse { row: usize, value: f64 },
    #[error("chain diverged at draw {draw} in the {block} update")]
    ChainDiverged { draw: usize, block: String },
    #[error(transparent)]
    Core(#[from] r2d2_core::R2d2Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GlmmError>;
