use thiserror::Error;

use crate::expr::ParseError;
use crate::scalar::MathError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("order mismatch: expected {expected}, found {found}")]
    OrderMismatch { expected: usize, found: usize },
    #[error("invalid order {0}")]
    InvalidOrder(usize),
    #[error("point {point:?} lies outside the domain box")]
    OutsideDomain { point: Vec<f64> },
    #[error("domain box is degenerate in coordinate {0}")]
    DegenerateDomain(usize),
    #[error("point {point:?} is closer than {margin} to the domain boundary")]
    MarginViolation { point: Vec<f64>, margin: f64 },
    #[error("singular linear system")]
    Singular,
    #[error("differential has deficient rank at {point:?}")]
    RankDeficient { point: Vec<f64> },
    #[error("mixing weight {0} is outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("expression uses a construct that has no exact polynomial form: {0}")]
    NotPolynomial(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
