//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("passive block is ill-conditioned (condition number {0:.3e})")]
    IllConditionedPassiveBlock(f64),

    #[error("non-positive diagonal entry {value:.3e} at index {index}")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("near-singular conditional covariance (diagonal entry {value:.3e} at index {index})")]
    NearSingularSchur { index: usize, value: f64 },

    #[error("degenerate eigenvalues: {0}")]
    DegenerateEigenvalues(String),

    #[error("order k={k} out of range for {n} values")]
    InvalidOrder { k: usize, n: usize },

    #[error("precision ladder exhausted at {0} bits")]
    PrecisionExhausted(usize),

    #[error("bound undefined at the identity spectrum (S = 0)")]
    UndefinedAtIdentity,

    #[error("positivity violated: {0}")]
    PositivityViolation(String),

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("invalid mixture oracle: {0}")]
    InvalidOracle(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable kebab-case tag for machine-readable output (CSV cells,
    /// per-row failure reasons).
    pub fn slug(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid-dimension",
            Error::InvalidCovariance(_) => "invalid-covariance",
            Error::IllConditionedPassiveBlock(_) => "ill-conditioned-passive-block",
            Error::NonPositiveDiagonal { .. } => "non-positive-diagonal",
            Error::NearSingularSchur { .. } => "near-singular-schur",
            Error::DegenerateEigenvalues(_) => "degenerate-eigenvalues",
            Error::InvalidOrder { .. } => "invalid-order",
            Error::PrecisionExhausted(_) => "precision-exhausted",
            Error::UndefinedAtIdentity => "undefined-at-identity",
            Error::PositivityViolation(_) => "positivity-violation",
            Error::InvalidCount(_) => "invalid-count",
            Error::InvalidOracle(_) => "invalid-oracle",
            Error::InvalidInput(_) => "invalid-input",
        }
    }
}
