use duet_core::session::ConfigError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit status: 2 usage, 3 config, 4 data, 5 runtime fault.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Runtime(_) => 5,
        }
    }

    pub fn data(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }

    pub fn runtime(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{context}: {err}"))
    }
}
