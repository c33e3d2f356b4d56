use thiserror::Error;

/// Problems with the configuration file or command-line overrides.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("missing field {0}")]
    Missing(&'static str),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Io(String),
}

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("policy file {path} was optimized for channel {found}, configured channel is {expected}")]
    DigestMismatch { path: String, expected: String, found: String },
    #[error("budget exceeded: {0}")]
    Budget(fsc_core::Error),
    #[error("oracle check failed")]
    OracleFailure,
    #[error(transparent)]
    Core(fsc_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<fsc_core::Error> for CliError {
    fn from(e: fsc_core::Error) -> Self {
        use fsc_core::Error as E;
        match e {
            E::GridTooLarge { .. } | E::PolicySpaceTooLarge { .. } | E::EnumerationTooLarge { .. } => CliError::Budget(e),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// 1 for configuration and input problems, 2 for exceeded budgets, 3 for
    /// a failed oracle check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Budget(_) => 2,
            CliError::OracleFailure => 3,
            _ => 1,
        }
    }
}
