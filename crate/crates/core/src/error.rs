use thiserror::Error;

/// Errors raised by the laboratory's numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("curvature vector outside the {cone} cone: {condition}")]
    ConeViolation { cone: &'static str, condition: String },

    #[error("speed `{speed}` is only defined for n = {required}, got n = {got}")]
    UnsupportedDimension {
        speed: &'static str,
        required: usize,
        got: usize,
    },

    #[error("invalid speed: {0}")]
    InvalidSpeed(String),

    #[error("finite-difference stencil at {0:?} cannot stay inside the cone")]
    BoundaryProximity(Vec<f64>),

    #[error("symmetric eigen-solve failed: {0}")]
    EigenFailure(String),

    #[error("sampling failure: {0}")]
    SamplingFailure(String),

    #[error("root bracketing failed at r = {r}, u = {u}, u_r = {u_r}")]
    RootBracket { r: f64, u: f64, u_r: f64 },

    #[error("step size underflow at r = {r} (u = {u}, u_r = {u_r})")]
    StepUnderflow { r: f64, u: f64, u_r: f64 },

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("finite differencing broke down: {0}")]
    Differencing(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
