use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("ingestion error in {path}: {reason}")]
    Ingestion { path: String, reason: String },

    #[error("density ratio fitting failed: {0}")]
    Fitting(String),

    #[error("source weighting violates constraint: {0}")]
    Weighting(String),

    #[error("support assumption violated: {0}")]
    Assumption(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("seed {seed}, stage {stage}: {source}")]
    Stage {
        seed: u64,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_stage(self, seed: u64, stage: &'static str) -> Self {
        Error::Stage {
            seed,
            stage,
            source: Box::new(self),
        }
    }
}
