use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid code: {0}")]
    InvalidCode(String),

    #[error("invalid mainlobe geometry: {0}")]
    InvalidGeometry(String),

    #[error("filter length {filter_len} is shorter than code length {code_len}")]
    FilterTooShort { code_len: usize, filter_len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("sidelobe Gram matrix is singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("restart {restart}, iteration {iteration}: {source}")]
    Descent {
        restart: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
