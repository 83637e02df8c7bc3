use thiserror::Error;

/// Errors produced by model construction and fitting.
#[derive(Error, Debug)]
pub enum SopError {
    /// A specification violates one of its invariants (bad segment counts,
    /// incompatible dimensions, nonpositive smoothing parameters, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input values fall outside the supported domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Data vectors are malformed (non-finite entries, length mismatches,
    /// degenerate responses).
    #[error("invalid data: {0}")]
    Data(String),

    /// A design block that must have full column rank does not.
    #[error("rank deficiency: {0}")]
    Rank(String),

    /// A numerical kernel failed beyond recovery (factorization breakdown).
    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, SopError>;
