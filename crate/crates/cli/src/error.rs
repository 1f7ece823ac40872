use std::fmt;
use std::process::ExitCode;

/// CLI failure, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad command line: exit 2.
    Usage(String),
    /// Missing, unreadable or invalid configuration: exit 3.
    Config(String),
    /// Input data or output files: exit 4.
    Data(String),
    /// A result failed an internal consistency check: exit 5.
    Invariant(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Invariant(_) => 5,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Data(m) | CliError::Invariant(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self {
            CliError::Usage(_) => "usage error",
            CliError::Config(_) => "config error",
            CliError::Data(_) => "data error",
            CliError::Invariant(_) => "invariant failure",
        };
        write!(f, "{kind}: {}", self.message())
    }
}

impl std::error::Error for CliError {}

impl From<convbid_core::Error> for CliError {
    fn from(e: convbid_core::Error) -> Self {
        match e {
            convbid_core::Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
