use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config file line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("operation requires orthogonal pilots but the configuration uses contaminated pilots")]
    PilotMode,

    #[error("approximation invalid for this configuration: {what} = {value:e}")]
    DegenerateApproximation { what: &'static str, value: f64 },

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds tolerance {tolerance:e}")]
    Quadrature { achieved: f64, tolerance: f64 },

    #[error("SINR denominator is exactly zero for user {user}")]
    ZeroDenominator { user: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("exact multi-fold integral limited to M*N <= {limit} (got {requested}); use the dimension-reduction path instead")]
    TooManyDimensions { requested: usize, limit: usize },

    #[error("{0}")]
    Invalid(String),
}
