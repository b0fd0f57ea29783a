use thiserror::Error;
use twosex::validate::ValidationReport;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario violates the hypotheses:\n{0}")]
    Validation(ValidationReport),

    #[error(transparent)]
    Solver(#[from] twosex::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 3 for a numerical abort, 2 for everything the configuration caused.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Solver(twosex::Error::SolverAbort { .. }) => 3,
            _ => 2,
        }
    }
}
