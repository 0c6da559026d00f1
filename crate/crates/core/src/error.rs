use thiserror::Error;

/// Errors reported by the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("point outside the admissible region: {0}")]
    Domain(String),

    #[error("branch cut crossed: {0}")]
    Branch(String),

    #[error("non-finite integrand value at node {location}")]
    NonFinite { location: f64 },

    #[error("unknown catalog entry `{0}`")]
    Catalog(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precision budget exceeded: needs {needed} bits, limit is {limit}")]
    PrecisionBudget { needed: u32, limit: u32 },

    #[error("data import failed: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
