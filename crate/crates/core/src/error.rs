use thiserror::Error;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cubic has three real roots (discriminant {discriminant:e})")]
    NonUniqueRealRoot { discriminant: f64 },
    #[error("quadratic constant term must be non-negative, got {0:e}")]
    NegativeTheta(f64),
    #[error("Lyapunov value must be non-negative, got {0:e}")]
    NegativeLyapunovValue(f64),
    #[error("gain m must satisfy m >= 2, got {0}")]
    InvalidGain(f64),
    #[error("grid needs at least 3 nodes, got {0}")]
    GridTooSmall(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite state at t = {t:e}")]
    UnstableStep { t: f64 },
    #[error("horizon not reached after {steps} steps (t = {t:e})")]
    HorizonExceeded { steps: usize, t: f64 },
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error("scenarios differ in {0}")]
    MismatchedScenarios(&'static str),
    #[error("law {law} is not defined for plant {plant}")]
    IncompatibleLawPlant { law: String, plant: String },
    #[error("no boundary value consistent with the feedback law for this initial profile")]
    IncompatibleInitialState,
    #[error("feedback loop has no boundary solution at t = {t:e} (last v = {v:e})")]
    ControlImpasse { t: f64, v: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
