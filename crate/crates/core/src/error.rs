use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: expected {expected} rows, found {found}")]
    RowCountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: non-finite value at row {row}, column {column}")]
    NonFinite {
        path: PathBuf,
        row: usize,
        column: usize,
    },

    #[error("duplicate participant id `{0}`")]
    DuplicateParticipant(String),

    #[error("invalid session `{participant}`: {}", join_violations(.violations))]
    InvalidSession {
        participant: String,
        violations: Vec<Violation>,
    },

    #[error("corpus has no sessions")]
    EmptyCorpus,

    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),

    #[error("modality `{0}` is not available")]
    MissingModality(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("class {class} is out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("insufficient data: {0}")]
    InsufficientClass(String),

    #[error("cannot downsample {no_error} NoError windows to match {error1} Error1 windows")]
    UnsatisfiableDownsampling { no_error: usize, error1: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("every fold was skipped")]
    AllFoldsSkipped,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for errors caused by bad input data rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::RowCountMismatch { .. }
                | Error::NonFinite { .. }
                | Error::DuplicateParticipant(_)
                | Error::InvalidSession { .. }
                | Error::EmptyCorpus
                | Error::InvalidConfig(_)
                | Error::MissingModality(_)
        )
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
