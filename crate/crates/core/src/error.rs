use thiserror::Error;

/// Errors raised by the reconstruction pipeline.
///
/// Numeric payloads are reported as `f64` regardless of the scalar type the
/// computation ran in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid implies {steps} steps, above the limit of {limit}")]
    StepCountOverflow { steps: f64, limit: u64 },

    #[error("state left the invariant set at t={t}: {detail}")]
    InvariantViolation { t: f64, detail: String },

    #[error("parameter {name}={value} outside its admissible range")]
    ThetaOutOfBox { name: String, value: f64 },

    #[error("output magnitude below threshold at t={t}")]
    OutputNearZero { t: f64 },

    #[error("degenerate parameter combination: {0}")]
    SigmaDegenerate(String),

    #[error("derivative order {requested} unsupported (maximum {max})")]
    OrderUnsupported { requested: usize, max: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("no nonsingular regressor subset found in window (block {block})")]
    SingularEverywhere { block: usize },

    #[error("Wronskian vanishes at t={t} (block {block}, det={det:e}, cond={cond:e})")]
    WronskianVanishes { t: f64, block: usize, det: f64, cond: f64 },

    #[error("linear system numerically singular (block {block}, cond={cond:e})")]
    NumericallySingular { block: usize, cond: f64 },

    #[error("closeness bound violated at t={t}: gap {gap:e} > bound {bound:e}")]
    BoundViolated { t: f64, gap: f64, bound: f64 },

    #[error("window carries no usable variation: {0}")]
    DegenerateWindow(String),

    #[error("integration failed: {0}")]
    IntegrationFailure(String),

    #[error("initial infected fraction {infected} exceeds 1 - S0 = {room}")]
    InfeasibleInitialInfected { infected: f64, room: f64 },

    #[error("all {starts} calibration starts failed")]
    AllStartsFailed { starts: usize },

    #[error("method needs derivative data: {0}")]
    MethodNeedsDerivatives(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable identifier for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::StepCountOverflow { .. } => "StepCountOverflow",
            Error::InvariantViolation { .. } => "InvariantViolation",
            Error::ThetaOutOfBox { .. } => "ThetaOutOfBox",
            Error::OutputNearZero { .. } => "OutputNearZero",
            Error::SigmaDegenerate(_) => "SigmaDegenerate",
            Error::OrderUnsupported { .. } => "OrderUnsupported",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::SingularEverywhere { .. } => "SingularEverywhere",
            Error::WronskianVanishes { .. } => "WronskianVanishes",
            Error::NumericallySingular { .. } => "NumericallySingular",
            Error::BoundViolated { .. } => "BoundViolated",
            Error::DegenerateWindow(_) => "DegenerateWindow",
            Error::IntegrationFailure(_) => "IntegrationFailure",
            Error::InfeasibleInitialInfected { .. } => "InfeasibleInitialInfected",
            Error::AllStartsFailed { .. } => "AllStartsFailed",
            Error::MethodNeedsDerivatives(_) => "MethodNeedsDerivatives",
            Error::Unsupported(_) => "Unsupported",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
