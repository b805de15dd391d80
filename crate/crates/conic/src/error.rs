use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("variable index {index} out of range ({count} variables)")]
    VarOutOfRange { index: usize, count: usize },

    #[error("binary variable {0} is the head of a cone")]
    BinaryConeHead(usize),

    #[error("binary variable {index} has bounds [{lower}, {upper}] outside [0, 1]")]
    BinaryBounds { index: usize, lower: f64, upper: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
