use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} missing")]
    MissingFile { name: String },

    #[error("{file}:{line}: {message}")]
    Row { file: String, line: u64, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown timezone {0:?}")]
    Timezone(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero variance")]
    ZeroVariance,

    #[error("constant covariate")]
    ConstantCovariate,

    #[error("zero treated variance for confounder {0}")]
    ZeroTreatedVariance(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("no matched pairs")]
    ZeroPairs,

    #[error("mean control outcome is zero")]
    ZeroControlMean,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("treatment uncorrelated with outcome: {treatment} has p = {p}")]
    Uncorrelated { treatment: String, p: f64 },

    #[error("unbalanced matching: max |SMD| = {max_abs_smd} ({worst})")]
    Unbalanced { max_abs_smd: f64, worst: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn row(file: &str, line: u64, message: impl Into<String>) -> Self {
        Error::Row {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }
}
