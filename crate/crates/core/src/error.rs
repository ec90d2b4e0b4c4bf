use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: row {row}, column `{column}`: {message}")]
    Parse {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{file}: row {row}: unknown policy_id `{policy_id}`")]
    UnknownPolicy {
        file: String,
        row: usize,
        policy_id: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("{0}")]
    OutsideGrid(String),

    #[error("sample construction: {0}")]
    Sample(String),

    #[error("policy `{policy_id}`: claims `{first}` and `{second}` fall in the same time unit; one claim per unit is assumed")]
    DuplicateUnit {
        policy_id: String,
        first: String,
        second: String,
    },

    #[error("censoring set is empty on the grid: {0}")]
    EmptyCensoringSet(String),

    #[error("no conditional mass beyond elapsed time {elapsed}")]
    NoConditionalMass { elapsed: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("triangle: {0}")]
    Triangle(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
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
