use thiserror::Error;

/// Failures surfaced by the command-line front end, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    /// Input files that parse but lack what a command needs.
    #[error("{0}")]
    Data(String),

    #[error("solver aborted: {0}")]
    Abort(String),

    #[error("{0}")]
    ChecksFailed(String),

    #[error(transparent)]
    Core(#[from] popowicz::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 1 check failure, 2 usage or configuration error, 3 solver abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Abort(_) => 3,
            CliError::Core(popowicz::Error::Abort(_)) => 3,
            _ => 2,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
