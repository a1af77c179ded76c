use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Estimation(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Estimation(_) => 3,
            CliError::Budget(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<adaptrial::Error> for CliError {
    fn from(e: adaptrial::Error) -> Self {
        match e {
            adaptrial::Error::FailureBudgetExceeded { .. } => CliError::Budget(e.to_string()),
            e if e.is_estimation_failure() => CliError::Estimation(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
