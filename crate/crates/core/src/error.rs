use thiserror::Error;

pub type Result<T> = std::result::Result<T, OmegaError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OmegaError {
    #[error("invalid column labels at columns {0:?}")]
    InvalidLabels(Vec<usize>),
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("cannot parse value {value:?} in row {row}, column {col}")]
    BadValue {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("no unit has at least two observed scores")]
    EmptyData,
    #[error("value {value} at row {row}, column {col} is not a positive integer as {level} data requires")]
    Level {
        row: usize,
        col: usize,
        value: f64,
        level: &'static str,
    },
    #[error("unknown {what}: {name:?}")]
    UnknownName { what: &'static str, name: String },
    #[error("structure error: {0}")]
    Structure(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("{0} is only defined for discrete marginals")]
    NotDiscrete(&'static str),
    #[error("objective {objective} cannot be used with the {family} marginal")]
    Incompatible {
        objective: &'static str,
        family: &'static str,
    },
    #[error("objective is not finite at the gradient stencil (coordinate {0})")]
    Gradient(usize),
    #[error("observed information is singular or not positive definite: {0}")]
    SingularHessian(String),
    #[error("invalid control setting: {0}")]
    Control(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("not defined: {0}")]
    Undefined(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<csv::Error> for OmegaError {
    fn from(err: csv::Error) -> Self {
        OmegaError::Csv(err.to_string())
    }
}
