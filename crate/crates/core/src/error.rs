use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("classifier {method} labels object {object} as {label}, outside 1..={classes}")]
    LabelOutOfRange {
        method: usize,
        object: usize,
        label: usize,
        classes: usize,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("row {0} has zero sum")]
    ZeroRow(usize),

    #[error("column {0} has zero sum")]
    ZeroColumn(usize),

    #[error("matrix is not symmetric: |K[{i},{j}] - K[{j},{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },

    #[error("matrix has a negative entry at ({0}, {1})")]
    NegativeEntry(usize, usize),

    #[error("nonpositive denominator {value:e} while updating {block} row {index}")]
    Denominator {
        block: &'static str,
        index: usize,
        value: f64,
    },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ZeroRow(_)
            | Error::ZeroColumn(_)
            | Error::NotSymmetric { .. }
            | Error::NegativeEntry(..)
            | Error::Denominator { .. } => ErrorKind::Numerical,
            Error::Io { .. } | Error::Csv(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
