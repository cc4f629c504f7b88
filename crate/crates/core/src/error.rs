use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HscfError>;

#[derive(Debug, Error)]
pub enum HscfError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing file {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("subject {subject}: matrix {matrix} is not symmetric at ({row}, {col})")]
    Asymmetric {
        subject: String,
        matrix: String,
        row: usize,
        col: usize,
    },

    #[error(
        "subject {subject}: matrix {matrix} has weight {value} outside [0, 1] at ({row}, {col})"
    )]
    OutOfRange {
        subject: String,
        matrix: String,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("subject {subject}: matrix {matrix} has non-zero diagonal entry {value} at {index}")]
    NonZeroDiagonal {
        subject: String,
        matrix: String,
        index: usize,
        value: f64,
    },

    #[error("subject {subject}: unknown label {label:?} (expected NC, EMCI or LMCI)")]
    InvalidLabel { subject: String, label: String },

    #[error("subject {subject}: volume {value} at ROI {index} must be positive and finite")]
    InvalidVolume {
        subject: String,
        index: usize,
        value: f64,
    },

    #[error("subject {subject}: {detail}")]
    Malformed { subject: String, detail: String },

    #[error("cohort has no subjects of class {0}")]
    EmptyClass(String),

    #[error("model expects {expected} ROIs but the data has {found}")]
    RoiMismatch { expected: usize, found: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl HscfError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HscfError::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        HscfError::Json {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than by the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, HscfError::Io { .. } | HscfError::Contract(_))
    }
}
