use std::fmt;
use std::path::PathBuf;

use coopgrid_conic::Status;
use thiserror::Error;

use crate::coalition::Coalition;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One problem found by scenario validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    NonPositiveDefiniteShape { set: usize, pivot: f64 },
    AsymmetricShape { set: usize, error: f64 },
    TariffArbitrage { period: usize, buy: f64, sell: f64 },
    EmptyBudget { budget: f64 },
    BoundsInverted { prosumer: String, period: usize, lower: f64, upper: f64 },
    DimensionMismatch { field: String, expected: usize, found: usize },
    Negative { field: String, value: f64 },
    NotFinite { field: String },
    UnknownProsumer { id: String },
    DuplicateProsumer { id: String },
    Invalid { field: String, message: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NonPositiveDefiniteShape { set, pivot } => {
                write!(f, "uncertainty set {set}: shape matrix is not positive definite (pivot {pivot:.3e})")
            }
            Issue::AsymmetricShape { set, error } => {
                write!(f, "uncertainty set {set}: shape matrix is not symmetric (max error {error:.3e})")
            }
            Issue::TariffArbitrage { period, buy, sell } => {
                write!(f, "period {period}: sell price {sell} exceeds buy price {buy}")
            }
            Issue::EmptyBudget { budget } => {
                write!(f, "data contributions exhaust the uncertainty budget (remaining {budget})")
            }
            Issue::BoundsInverted { prosumer, period, lower, upper } => {
                write!(f, "prosumer {prosumer}, period {period}: load lower bound {lower} exceeds upper bound {upper}")
            }
            Issue::DimensionMismatch { field, expected, found } => {
                write!(f, "{field}: expected length {expected}, found {found}")
            }
            Issue::Negative { field, value } => write!(f, "{field} must be nonnegative, found {value}"),
            Issue::NotFinite { field } => write!(f, "{field} contains a non-finite value"),
            Issue::UnknownProsumer { id } => write!(f, "unknown prosumer id `{id}`"),
            Issue::DuplicateProsumer { id } => write!(f, "duplicate prosumer id `{id}`"),
            Issue::Invalid { field, message } => write!(f, "{field}: {message}"),
        }
    }
}

/// Broad classes used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Solver,
    Guard,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse { line: usize, column: usize, field: String, message: String },

    #[error("invalid scenario: {}", join(.0))]
    Validation(Vec<Issue>),

    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch { what: String, expected: usize, found: usize },

    #[error("matrix is not positive definite (pivot {pivot:.3e})")]
    NotPositiveDefinite { pivot: f64 },

    #[error("{players} players exceed the {method} limit of {limit}; use the least-core method for large games")]
    TooManyPlayers { players: usize, limit: usize, method: &'static str },

    #[error("coalition is empty")]
    EmptyCoalition,

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("coalition {coalition} is infeasible; likely cause: {cause}")]
    Infeasible { coalition: Coalition, cause: String },

    #[error("coalition {coalition} has an unbounded dispatch problem")]
    Unbounded { coalition: Coalition },

    #[error("solver failure ({status}): {detail}")]
    SolverFailure { status: Status, detail: String },

    #[error("{0}")]
    InvalidArgument(String),
}

fn join(issues: &[Issue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::DimensionMismatch { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::InvalidArgument(_) => ErrorKind::Input,
            Error::Infeasible { .. } | Error::Unbounded { .. } | Error::SolverFailure { .. } => ErrorKind::Solver,
            Error::TooManyPlayers { .. } | Error::EmptyCoalition | Error::ModeMismatch(_) => ErrorKind::Guard,
        }
    }
}
