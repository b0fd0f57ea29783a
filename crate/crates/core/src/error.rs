use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("age {age} (+ {delta}) outside [0, {max_age}]")]
    AgeOutOfRange { age: f64, delta: f64, max_age: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("solver produced a non-finite value at time step {step} ({what})")]
    SolverAbort { step: usize, what: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("geometry violation: {0}")]
    Geometry(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}
