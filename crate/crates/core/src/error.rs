use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("labels contain a single class; both values are required")]
    DegenerateLabels,

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate attributes: {0}")]
    DegenerateAttributes(String),

    #[error("degenerate dissimilarity normalizer in {0} space")]
    DegenerateDissimilarity(&'static str),

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("self pair: class {0} compared with itself")]
    SelfPair(usize),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("infeasible assignment: {unseen} unseen classes but only {seen} seen classes")]
    Infeasible { seen: usize, unseen: usize },

    #[error("attribute {attribute} value {value} of class {class} is carried by no seen class")]
    UncoverableAttribute {
        class: usize,
        attribute: usize,
        value: u8,
    },

    #[error("empty test set")]
    EmptyTestSet,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::Dimension { .. } => "dimension",
            Error::DegenerateLabels => "degenerate_labels",
            Error::NonFinite { .. } => "non_finite",
            Error::DegenerateAttributes(_) => "degenerate_attributes",
            Error::DegenerateDissimilarity(_) => "degenerate_dissimilarity",
            Error::EmptyClass(_) => "empty_class",
            Error::SelfPair(_) => "self_pair",
            Error::OutOfRange { .. } => "out_of_range",
            Error::Infeasible { .. } => "infeasible",
            Error::UncoverableAttribute { .. } => "uncoverable_attribute",
            Error::EmptyTestSet => "empty_test_set",
        }
    }

    /// Process exit status: 1 for input/config problems, 2 for numeric or
    /// degeneracy failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Config(_)
            | Error::Dimension { .. }
            | Error::OutOfRange { .. }
            | Error::EmptyTestSet => 1,
            Error::DegenerateLabels
            | Error::NonFinite { .. }
            | Error::DegenerateAttributes(_)
            | Error::DegenerateDissimilarity(_)
            | Error::EmptyClass(_)
            | Error::SelfPair(_)
            | Error::Infeasible { .. }
            | Error::UncoverableAttribute { .. } => 2,
        }
    }
}
