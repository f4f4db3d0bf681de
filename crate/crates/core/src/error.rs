use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {rule}")]
    InvalidParameter { key: String, rule: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("unsupported Lebesgue exponent q = {0}")]
    UnsupportedExponent(f64),

    #[error("singular Lagrange map: sup |k| = {0} >= 1")]
    SingularMap(f64),

    #[error("inadmissible Lagrange map: integral of sup |grad u| = {integral} >= delta = {delta}")]
    InadmissibleMap { integral: f64, delta: f64 },

    #[error("inadmissible state: {0}")]
    InadmissibleState(String),

    #[error("resolvent is singular at lambda = {0}")]
    Spectrum(String),

    #[error("negative time t = {0}")]
    NegativeTime(f64),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("trajectory carries no time derivatives")]
    MissingDerivatives,

    #[error("frame mismatch: expected {expected:?}, got {got:?}")]
    FrameMismatch {
        expected: crate::model::Frame,
        got: crate::model::Frame,
    },

    #[error("no-slip condition violated: |v| = {0} on the boundary")]
    BoundaryViolation(f64),

    #[error("misaligned time grids: {0}")]
    MisalignedTimes(String),

    #[error("initial state must be at t = 0, got t = {0}")]
    WrongTime(f64),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("unsupported on this domain: {0}")]
    Unsupported(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
