use thiserror::Error;

pub type Result<T> = std::result::Result<T, LweError>;

#[derive(Debug, Error)]
pub enum LweError {
    #[error("modulus {0} is not an odd prime in [3, {max}]", max = crate::fq::MAX_MODULUS)]
    InvalidModulus(u64),

    #[error("zero has no multiplicative inverse")]
    ZeroInverse,

    #[error("matrix is singular mod {modulus} (no pivot in column {column})")]
    SingularMatrix { modulus: u64, column: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mixed moduli: {0} vs {1}")]
    ModulusMismatch(u64, u64),

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("error bound {bound} must be below q/2 (q = {modulus})")]
    BoundTooLarge { bound: u64, modulus: u64 },

    #[error("duplicate input register value {0}")]
    DuplicateInput(u64),

    #[error("test sample has t = 0 and carries no information")]
    DegenerateTest,

    #[error("test source exhausted after {available} of {needed} pairs")]
    TestSourceExhausted { available: usize, needed: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),

    #[error("no records to emit")]
    EmptyResult,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LweError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        LweError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
