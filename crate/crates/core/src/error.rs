use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing required column `{column}` in {table}")]
    MissingColumn { table: String, column: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no events in {0}")]
    NoEvents(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("separation detected: coefficient magnitude {magnitude:.1} is unbounded; increase the L2 strength (lambda_reg)")]
    Separation { magnitude: f64 },

    #[error("hazard {value} outside [0, 1]{context}")]
    InvalidHazard { value: f64, context: String },

    #[error("zero censoring-survival divisor at horizon {horizon}")]
    ZeroDivisor { horizon: u32 },

    #[error("no comparable pairs for concordance")]
    NoComparablePairs,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn missing_column(table: impl Into<String>, column: impl Into<String>) -> Self {
        Error::MissingColumn {
            table: table.into(),
            column: column.into(),
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
