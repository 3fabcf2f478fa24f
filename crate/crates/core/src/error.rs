use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("degenerate density")]
    DegenerateDensity,
    #[error("density not admissible: cell {cell} has value {value}")]
    NotAdmissible { cell: usize, value: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("undefined at origin")]
    UndefinedAtOrigin,
    #[error("hard core has no smooth force; use overlap resolution")]
    NoSmoothForce,
    #[error("alpha undefined: {0}")]
    AlphaUndefined(String),
    #[error("no excluded volume")]
    NoExcludedVolume,
    #[error("CFL violation: dt = {dt:e} exceeds stable bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("linearized rate implemented for V = 0 only")]
    LinearizedRateNeedsZeroPotential,
    #[error("step too large: particle displaced by {displacement} in one step")]
    StepTooLarge { displacement: f64 },
    #[error("jammed configuration: overlaps remain after {sweeps} sweeps")]
    Jammed { sweeps: usize },
    #[error("not in exponential regime: {0}")]
    NotExponential(String),
    #[error("minimizer did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by malformed user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::InvalidGrid(_) | Error::InvalidInput(_)
        )
    }
}
