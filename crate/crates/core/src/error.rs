use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
///
/// Variant names are stable: the CLI surfaces them verbatim as error codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("EmptyClass: {0}")]
    EmptyClass(String),

    #[error("NotSymmetric: max asymmetry {0:e}")]
    NotSymmetric(f64),

    #[error("SingularSystem: normal-equation matrix is not positive definite")]
    SingularSystem,

    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("BadMagic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),

    #[error("NonFinite: {0}")]
    NonFinite(String),

    #[error("DuplicateClass: {0}")]
    DuplicateClass(String),

    #[error("FileNotFound: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("Parse: {0}")]
    Parse(String),

    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),

    #[error("UndefinedCDNV: classes {0} and {1} share a mean and have zero variance")]
    UndefinedCdnv(String, String),

    #[error("DegenerateMeans: all class means coincide")]
    DegenerateMeans,

    #[error("BadMargin: margin must be positive, got {0}")]
    BadMargin(f64),

    #[error("TooLarge: {terms} enumeration terms exceed cap {cap}")]
    TooLarge { terms: f64, cap: f64 },

    #[error("NotEnoughClasses: need {needed}, have {available}")]
    NotEnoughClasses { needed: usize, available: usize },

    #[error("NotEnoughSamples: class {class} needs {needed}, has {available}")]
    NotEnoughSamples {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("PreconditionViolated: {0}")]
    PreconditionViolated(String),

    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable code (the variant name).
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyClass(_) => "EmptyClass",
            Error::NotSymmetric(_) => "NotSymmetric",
            Error::SingularSystem => "SingularSystem",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::BadMagic { .. } => "BadMagic",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::DuplicateClass(_) => "DuplicateClass",
            Error::FileNotFound(_) => "FileNotFound",
            Error::Parse(_) => "Parse",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::UndefinedCdnv(..) => "UndefinedCDNV",
            Error::DegenerateMeans => "DegenerateMeans",
            Error::BadMargin(_) => "BadMargin",
            Error::TooLarge { .. } => "TooLarge",
            Error::NotEnoughClasses { .. } => "NotEnoughClasses",
            Error::NotEnoughSamples { .. } => "NotEnoughSamples",
            Error::PreconditionViolated(_) => "PreconditionViolated",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
