use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Estimation,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 1,
            ErrorKind::Data => 2,
            ErrorKind::Estimation => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: invalid {field}: {message}")]
    Parse {
        row: usize,
        field: &'static str,
        message: String,
    },

    #[error("invalid {what}: {message}")]
    InvalidInput { what: &'static str, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("undefined share: total value for {year} is zero")]
    UndefinedShare { year: i32 },

    #[error("insufficient data for {context}: need {needed}, found {found}")]
    InsufficientData {
        context: String,
        needed: usize,
        found: usize,
    },

    #[error("rank-deficient design in {context}")]
    RankDeficient { context: String },

    #[error("singular local design on the {side} side (h = {bandwidth})")]
    SingularDesign { side: &'static str, bandwidth: f64 },

    #[error("feasibility defined on levels only")]
    FeasibilityOnLog,

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("stage {stage} failed for series {label}: {source}")]
    Stage {
        stage: &'static str,
        label: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidInput { .. } => ErrorKind::Validation,
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::UndefinedShare { .. }
            | Error::Degenerate(_) => ErrorKind::Data,
            Error::InsufficientData { .. }
            | Error::RankDeficient { .. }
            | Error::SingularDesign { .. }
            | Error::FeasibilityOnLog => ErrorKind::Estimation,
            Error::Stage { source, .. } => source.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str, label: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            label: label.into(),
            source: Box::new(self),
        }
    }
}
