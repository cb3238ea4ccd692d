use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("fluctuator state {state} is not valid for a {levels}-level fluctuator")]
    InvalidState { state: String, levels: usize },

    #[error("drive {drive} is not available for a {levels}-level fluctuator")]
    InvalidDrive { drive: String, levels: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    /// Coherence stayed above 1/e for every time examined. `lower_bound` is
    /// the last time checked, so the true crossing (if any) lies beyond it.
    #[error("coherence did not cross 1/e before {lower_bound} us")]
    NoCrossing { lower_bound: f64 },

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("schedule is not feasible: {0}")]
    TimingInfeasible(String),

    #[error("schedule and trace do not line up: {0}")]
    LengthMismatch(String),

    #[error("unsupported readout phase {0} rad (only 0 and pi are allowed)")]
    InvalidPhase(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("hamiltonian is not hermitian (max deviation {0:e})")]
    NonHermitian(f64),

    #[error("unknown transition: {0}")]
    UnknownTransition(String),

    #[error("corrupt record on line {line}: {message}")]
    CorruptRecord { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
