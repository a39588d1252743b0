use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate polynomial: {0}")]
    Degenerate(&'static str),

    #[error("division by the zero rational function")]
    DivisionByZero,

    #[error("evaluation at s = {s} is within the guard distance of the pole {pole}")]
    NearPole { s: Complex64, pole: Complex64 },

    #[error("matrix structure mismatch: {0}")]
    Structure(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("operating point not found ({reason}); last residual {residual:.3e} pu")]
    OperatingPoint { reason: String, residual: f64 },

    #[error("criterion mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("degenerate-resonance: unsupported (converter zero coincides with a grid sequence pole at {0})")]
    DegenerateResonance(Complex64),

    #[error("marginal: point lies on the Nyquist curve (distance {distance:.3e})")]
    OnCurve { distance: f64 },

    #[error("bracket [{lo}, {hi}] gives the same verdict at both ends")]
    SameSignBracket { lo: f64, hi: f64 },

    #[error("steady-state initialization failed: d({state})/dt = {derivative:.3e}")]
    Initialization { state: String, derivative: f64 },

    #[error("analysis window: {0}")]
    Window(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
}

impl Error {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
