use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or parameter values.
    #[error("{0}")]
    Validation(String),
    /// A library error surfaced while running, with the step it came from.
    #[error("{context}: {source}")]
    Library {
        context: String,
        #[source]
        source: lerw3d::Error,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            // parameter errors raised by the library are validation failures
            CliError::Library { source: lerw3d::Error::InvalidParameter(_), .. } => 1,
            _ => 2,
        }
    }
}

pub(crate) trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError>;
}

impl<T> Context<T> for lerw3d::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|source| CliError::Library { context: what.into(), source })
    }
}

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Validation(msg.into()))
}
