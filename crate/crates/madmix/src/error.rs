use thiserror::Error;

/// Errors produced by flow construction and evaluation.
#[derive(Debug, Error)]
pub enum MadMixError {
    #[error("invalid probability vector: {0}")]
    InvalidPmf(String),

    #[error("atom index {index} out of range for support of size {support}")]
    AtomOutOfRange { index: usize, support: usize },

    #[error("cdf argument {0} outside [0, K]")]
    CdfIndexOutOfRange(usize),

    #[error("quantile argument {0} outside [0, 1)")]
    QuantileOutOfRange(f64),

    #[error("uniform auxiliary value {0} outside [0, 1)")]
    UniformOutOfRange(f64),

    #[error("atom {0} has zero conditional mass")]
    ZeroMassAtom(usize),

    #[error("shift {0} is too close to a low-denominator rational")]
    DegenerateShift(f64),

    #[error("state has {got} coordinates, target has {expected}")]
    DimensionMismatch { got: usize, expected: usize },

    #[error("target does not expose a tractable log-mass")]
    LogMassUnavailable,

    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("discrete state space too large to enumerate ({0} states)")]
    StateSpaceTooLarge(u128),

    #[error("weight optimization diverged at iteration {iter} (alpha = {alpha})")]
    DivergentWeight { iter: usize, alpha: f64 },

    #[error("non-finite score at coordinates {0:?}")]
    NonFiniteScore(Vec<usize>),

    #[error("empty cluster {0}: conditional undefined")]
    EmptyCluster(usize),

    #[error("{0}")]
    Model(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MadMixError>;
