use thiserror::Error;

/// Broad failure class; the command line maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input, failed invariant, bad configuration.
    Validation,
    /// The numerics broke down: divergence, singular model, non-finite cost.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal: {0}")]
    EmptySignal(String),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("gamma out of physiological range: {0} not in (1, 2)")]
    GammaOutOfRange(f64),
    #[error("parameter `{field}` must be strictly positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("negative heart-rate deviation {0} bpm")]
    NegativeHrDeviation(f64),
    #[error("denominator collapse: epsilon*w = {0} >= 1 (non-physiological parameters)")]
    DenominatorCollapse(f64),
    #[error("singular utilization: km0 + G = {0} <= 0")]
    Singularity(f64),
    #[error("divergence: non-finite state at t = {t} min")]
    Divergence { t: f64 },
    #[error("no detectable response: {0}")]
    NoDetectableResponse(String),
    #[error("non-finite cost at initial parameters")]
    NonFiniteInitialCost,
    #[error("initial guess outside bounds: {0}")]
    OutOfBounds(String),
    #[error("unidentifiable gain: input amplitude must be positive, got {0}")]
    UnidentifiableGain(f64),
    #[error("zero-variance reference: FIT is undefined for a constant signal")]
    ZeroVarianceReference,
    #[error("empty population")]
    EmptyPopulation,
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DenominatorCollapse(_)
            | Error::Singularity(_)
            | Error::Divergence { .. }
            | Error::NoDetectableResponse(_)
            | Error::NonFiniteInitialCost
            | Error::ZeroVarianceReference => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
