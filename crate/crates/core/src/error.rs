//! Error type shared by every module.
//!
//! Each variant renders with a stable kebab-case tag first (`shape-error: ...`)
//! so the CLI and log scrapers can key off the kind without parsing prose.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid-class-count: {0}")]
    InvalidClassCount(String),

    #[error("invalid-coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid-input: {0}")]
    InvalidInput(String),

    #[error("shape-error: {0}")]
    Shape(String),

    #[error("spec-error: {0}")]
    Spec(String),

    #[error("cache-error: {0}")]
    Cache(String),

    #[error("divergence-error: {0}")]
    Divergence(String),

    #[error("grouping-error: {0}")]
    Grouping(String),

    #[error("geometry-error: {0}")]
    Geometry(String),

    #[error("data-error: {0}")]
    Data(String),

    #[error("config-error: {0}")]
    Config(String),

    #[error("io-error: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// The kebab-case kind tag, e.g. `"invalid-coefficient"`.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::InvalidClassCount(_) => "invalid-class-count",
            LabError::InvalidCoefficient(_) => "invalid-coefficient",
            LabError::InvalidInput(_) => "invalid-input",
            LabError::Shape(_) => "shape-error",
            LabError::Spec(_) => "spec-error",
            LabError::Cache(_) => "cache-error",
            LabError::Divergence(_) => "divergence-error",
            LabError::Grouping(_) => "grouping-error",
            LabError::Geometry(_) => "geometry-error",
            LabError::Data(_) => "data-error",
            LabError::Config(_) => "config-error",
            LabError::Io(_) => "io-error",
        }
    }
}

pub(crate) fn shape_mismatch(what: &str, expected: usize, got: usize) -> LabError {
    LabError::Shape(format!("{what}: expected length {expected}, got {got}"))
}
