use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or arguments; exit status 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Oracle, I/O or numeric failure; exit status 3.
    #[error(transparent)]
    Runtime(xprobe::Error),
}

impl From<xprobe::Error> for CliError {
    fn from(e: xprobe::Error) -> Self {
        match e {
            xprobe::Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Runtime(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(3),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.into())
    }
}
