use std::fmt;

use tailwalk_core::Error as CoreError;

/// Command failure, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or incomplete configuration (exit 2).
    Config(String),
    /// An artifact from an earlier command is missing or unusable (exit 2).
    Dependency(String),
    /// A drift inequality could not be certified (exit 3).
    Certification(String),
    /// A statistical self-check failed (exit 4).
    Check(String),
    Io(String),
    Core(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Dependency(_) => 2,
            CliError::Certification(_) => 3,
            CliError::Check(_) => 4,
            CliError::Core(CoreError::CertificationFailed { .. }) => 3,
            CliError::Core(CoreError::CheckFailed(_)) => 4,
            CliError::Core(CoreError::Parameter(_)) => 2,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Dependency(m) => write!(f, "missing dependency: {m}"),
            CliError::Certification(m) => write!(f, "certification failed: {m}"),
            CliError::Check(m) => write!(f, "statistical check failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
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

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
