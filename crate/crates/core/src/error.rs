use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm is below the normalization floor")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("correlation {0} lies outside [-1, 1]")]
    DomainError(f64),
    #[error("update vector degenerated to (near) zero norm")]
    DegenerateUpdate,
    #[error("update function is not stable")]
    NotStable,
    #[error("update function is not active")]
    NotActive,
    #[error("update function is not odd")]
    NotOdd,
    #[error("agent index {index} out of range for {n} agents")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("configuration is active: pair ({0}, {1}) witnesses activity")]
    NotInactive(usize, usize),
    #[error("structure violation: {0}")]
    StructureViolation(String),
    #[error("no progress possible: pair ({0}, {1}) is orthogonal")]
    NoProgress(usize, usize),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("expected exactly {expected} opinions, found {found}")]
    WrongArity { expected: usize, found: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
