use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact: {}", .0.display())]
    Missing(PathBuf),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error(transparent)]
    Core(sapa_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

impl From<sapa_core::Error> for CliError {
    fn from(e: sapa_core::Error) -> Self {
        match e {
            sapa_core::Error::Config(m) => CliError::Config(m),
            sapa_core::Error::Numeric { layer } => CliError::Numeric(format!("non-finite values in {layer}")),
            other => CliError::Core(other),
        }
    }
}
