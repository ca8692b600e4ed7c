use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive price {value} at index {index}")]
    NonPositivePrice { index: usize, value: f64 },

    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("series of length {len} is shorter than window length {window}")]
    SeriesShorterThanWindow { len: usize, window: usize },

    #[error("singular regression: {0}")]
    SingularRegression(String),

    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },

    #[error("constant input{}", .0.as_deref().map(|id| format!(" ({id})")).unwrap_or_default())]
    ConstantInput(Option<String>),

    #[error("all pairwise distances are identical; recurrence rate cannot be calibrated")]
    DegenerateDistances,

    #[error("external field has {field} increments but the path needs {steps}")]
    FieldLengthMismatch { field: usize, steps: usize },

    #[error("epochs overlap or fall outside [0, {n_steps})")]
    OverlappingEpochs { n_steps: usize },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{}:{line}: {message}", .file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("ensemble is empty{}", if .0.is_empty() { String::new() } else { format!(": {}", .0) })]
    EmptyEnsemble(String),

    #[error("member {id} misses {missing} of {total} calendar dates")]
    ExcessiveMissingData {
        id: String,
        missing: usize,
        total: usize,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with a location such as a window, pair or file.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by bad input (files, config, data shape),
    /// false for numerical failures during analysis.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Context { source, .. } => source.is_input_error(),
            Error::NonPositivePrice { .. }
            | Error::TooShort { .. }
            | Error::SeriesShorterThanWindow { .. }
            | Error::InvalidSeries(_)
            | Error::InvalidParameter(_)
            | Error::Parse { .. }
            | Error::EmptyEnsemble(_)
            | Error::ExcessiveMissingData { .. }
            | Error::FieldLengthMismatch { .. }
            | Error::OverlappingEpochs { .. }
            | Error::Config(_)
            | Error::Io(_)
            | Error::Json(_) => true,
            Error::SingularRegression(_)
            | Error::RankDeficient { .. }
            | Error::ConstantInput(_)
            | Error::DegenerateDistances => false,
        }
    }
}
