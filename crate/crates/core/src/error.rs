use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("numerical error{}: {msg}", patient.map(|i| format!(" at patient {i}")).unwrap_or_default())]
    Numerical { patient: Option<usize>, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at row {row}, column {column}: {msg}")]
    Parse {
        row: usize,
        column: String,
        msg: String,
    },

    #[error("initialization failed: {0}")]
    Init(String),

    #[error("diverged: {0}")]
    Divergence(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("{0} already exists; pass --force to overwrite")]
    Overwrite(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn numerical(patient: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Numerical {
            patient,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
