use thiserror::Error;

/// Errors raised by model validation, the Riccati recursions, the bound
/// computations and the configuration layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("model set is empty")]
    EmptySet,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model {model}: matrix {matrix} is not symmetric")]
    NotSymmetric { model: usize, matrix: &'static str },

    #[error("model {model}: matrix {matrix} is not positive definite")]
    NotPositiveDefinite { model: usize, matrix: &'static str },

    #[error("non-finite entry in {0}")]
    NonFiniteEntry(&'static str),

    #[error("innovation matrix R + H P H^T is singular")]
    SingularInnovation,

    #[error("stationary Riccati iteration did not converge for model {model} after {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        model: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("index {index} out of range for {len} models")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("gamma = {gamma} is infeasible: must exceed the floor {floor}")]
    InfeasibleGamma { gamma: f64, floor: f64 },

    #[error("lower weight violates Qunder <= I - gamma^-2 P for model {model}")]
    InvalidQunder { model: usize },

    #[error("X is singular at t = {t}")]
    SingularX { t: usize },

    #[error("no upper bound found below the cap {cap}")]
    NoUpperBound { cap: f64 },

    #[error("certificate is not monotone in gamma on [{lo}, {hi}]")]
    NonMonotone { lo: f64, hi: f64 },

    #[error("no passing certificate for pair ({i}, {j})")]
    CertificateMissing { i: usize, j: usize },

    #[error("exact computation supports at most two models, got {0}")]
    UnsupportedM(usize),

    #[error("theta is not a probability vector: {0}")]
    DegenerateTheta(String),

    #[error("sum of interpolation weights is not positive definite")]
    SingularSum,

    #[error("step {t}: {source}")]
    StepFailed { t: usize, source: Box<Error> },

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input, as opposed
    /// to numerical failures during a computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::EmptySet
            | Error::DimensionMismatch(_)
            | Error::NotSymmetric { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NonFiniteEntry(_)
            | Error::IndexOutOfRange { .. }
            | Error::InfeasibleGamma { .. }
            | Error::InvalidQunder { .. }
            | Error::UnsupportedM(_)
            | Error::DegenerateTheta(_)
            | Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::Io(_) => true,
            Error::StepFailed { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
