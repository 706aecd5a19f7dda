use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration file or flag.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Input that cannot be processed (empty or inconsistent result set).
    #[error("{0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Crbo(#[from] crbo::CrboError),
}

impl CliError {
    /// 2 for problems with what the user supplied, 1 for failures while
    /// running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            _ => 1,
        }
    }
}
