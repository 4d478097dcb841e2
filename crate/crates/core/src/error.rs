use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("group element lies outside the injectivity neighbourhood of exp")]
    OutOfInjectivityDomain,

    #[error("matrix is not tangent to the group: projection residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotTangent { residual: f64, tolerance: f64 },

    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("trajectory left the finite domain at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid group basis: {0}")]
    InvalidBasis(String),

    #[error("metric is not symmetric positive-definite at the given point")]
    SingularMetric,

    #[error("point is not regular: rank {rank} < {expected}")]
    NotRegular { rank: usize, expected: usize },

    #[error("target frequency is {angle:.3e} rad away from the detected direction")]
    DirectionMismatch { angle: f64 },

    #[error("inner product {value:.3e} with the target frequency is below {tolerance:.3e}")]
    DivisionNearZero { value: f64, tolerance: f64 },

    #[error("rescaled differential misses the target by {residual:.3e}")]
    RescaleResidual { residual: f64 },

    #[error("samples are not rescalable to an eigenfunction")]
    NotRescalable,

    #[error("complex map vanishes (|value| = {modulus:.3e})")]
    ZeroValue { modulus: f64 },

    #[error("no lift domain found down to radius {radius:.1e}")]
    LiftDomainEmpty { radius: f64 },

    #[error("point is {distance:.3e} from the lift anchor, outside radius {radius:.3e}")]
    DomainExit { distance: f64, radius: f64 },

    #[error("sample {index}: {source}")]
    AtSample { index: usize, source: Box<Error> },

    #[error("sample {index} at {point:?}: {source}")]
    AtPoint {
        index: usize,
        point: Vec<f64>,
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at_sample(index: usize, err: Error) -> Error {
        Error::AtSample {
            index,
            source: Box::new(err),
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
