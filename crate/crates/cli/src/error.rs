use renewal_mm::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// `1` for invalid input, `2` for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ChecksFailed { .. } => 1,
            CliError::Core(e) => match e {
                Error::InvalidParams(_)
                | Error::InvalidGrid(_)
                | Error::StabilityViolation { .. }
                | Error::QRangeTooSmall { .. }
                | Error::Schema(_)
                | Error::Json(_) => 1,
                _ => 2,
            },
            CliError::Io(_) => 2,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(Error::Schema(e.to_string()))
    }
}
