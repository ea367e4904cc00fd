use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid class prior: {0}")]
    InvalidPrior(String),

    #[error("invalid prior knowledge: {0}")]
    InvalidKnowledge(String),

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid smooth regularization: {0}")]
    InvalidRegularization(String),

    #[error("class counts {0:?} cannot be met by the sample groups")]
    InfeasibleCounts(Vec<usize>),

    #[error("instance too large for exhaustive enumeration: {assignments} assignments exceed limit {limit}")]
    TooLarge { assignments: f64, limit: f64 },

    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_param(name: &'static str, message: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        message: message.into(),
    }
}
