use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("non-numeric value {value:?} in column {column:?} at row {row}")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("missing value in column {column:?} at row {row}")]
    MissingValue { row: usize, column: String },
    #[error("column {0:?} has zero variance")]
    DegenerateColumn(String),
    #[error("level {level:?} of {group:?} has more than one coordinate pair")]
    InconsistentCoordinates { group: String, level: String },
    #[error("offset must be positive, got {value} at row {row}")]
    NonPositiveOffset { row: usize, value: f64 },
    #[error("column {column:?} failed the post-load standardization check")]
    Standardization { column: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] r2d2_core::R2d2Error),
    #[error(transparent)]
    Glmm(#[from] r2d2_glmm::GlmmError),
    #[error(transparent)]
    Sim(#[from] r2d2_sim::SimError),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::MissingColumn(_) => "MissingColumn",
            CliError::NonNumeric { .. } => "NonNumeric",
            CliError::MissingValue { .. } => "MissingValue",
            CliError::DegenerateColumn(_) => "DegenerateColumn",
            CliError::InconsistentCoordinates { .. } => "InconsistentCoordinates",
            CliError::NonPositiveOffset { .. } => "NonPositiveOffset",
            CliError::Standardization { .. } => "Standardization",
            CliError::Io { .. } => "Io",
            CliError::Csv(_) => "Csv",
            CliError::Json(_) => "Json",
            CliError::Core(_) => "Core",
            CliError::Glmm(r2d2_glmm::GlmmError::DegenerateColumn(_)) => "DegenerateColumn",
            CliError::Glmm(_) => "Glmm",
            CliError::Sim(_) => "Simulation",
        }
    }

    /// 2 for invalid invocations, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// The document written to stderr on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::NonNumeric { row, column, .. } | CliError::MissingValue { row, column } => {
                v["row"] = (*row).into();
                v["column"] = column.clone().into();
            }
            CliError::MissingColumn(c) | CliError::DegenerateColumn(c) => v["column"] = c.clone().into(),
            CliError::Glmm(r2d2_glmm::GlmmError::DegenerateColumn(c)) => v["column"] = c.clone().into(),
            CliError::NonPositiveOffset { row, .. } => v["row"] = (*row).into(),
            _ => {}
        }
        v
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
