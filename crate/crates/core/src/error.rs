use thiserror::Error;

/// Errors raised by the solver, closed forms, fits and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside its admissible range.
    #[error("{name} = {value} out of range: {bound}")]
    Domain {
        name: &'static str,
        value: f64,
        bound: &'static str,
    },

    /// The requested operation is not defined for these inputs.
    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// A dense allocation would exceed the configured cap.
    #[error("truncation {requested} exceeds the configured cap {cap}")]
    Resource { requested: usize, cap: usize },

    #[error("eigensolver failed at pair {index}: residual {residual:e}")]
    Convergence { index: usize, residual: f64 },

    #[error("ill-conditioned fit (condition estimate {condition:e}): {reason}")]
    IllConditioned { condition: f64, reason: String },

    /// A fit window holds too few samples for the available truncation.
    #[error("fit window [{lo}, {hi}] too small; need truncation of at least {required_n}")]
    WindowTooSmall {
        lo: usize,
        hi: usize,
        required_n: usize,
    },

    #[error("bracket [{lo}, {hi}] does not contain a sign change of the derivative")]
    Bracket { lo: f64, hi: f64 },

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("discretization failure: {0}")]
    Discretization(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed cache file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
