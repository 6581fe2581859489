use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unparseable flag, config entry or text form.
    #[error("{0}")]
    Parse(String),

    #[error("{0}")]
    Numeric(#[from] korovkin_core::Error),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Numeric(e) if e.is_input_error() => 1,
            CliError::Numeric(_) | CliError::Io(_) => 2,
        }
    }
}
