use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use ecgnet_core::Error as CoreError;

pub const EXIT_INTERNAL: u8 = 1;
/// Also what clap uses for usage errors.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Numeric,
    Internal,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Data, message: message.into() }
    }

    /// One line per missing path.
    pub fn missing_files(paths: &[PathBuf]) -> Self {
        let mut message = format!("{} required file(s) missing:", paths.len());
        for p in paths {
            message.push_str(&format!("\n  {}", p.display()));
        }
        CliError::data(message)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.kind {
            Kind::Config => EXIT_CONFIG,
            Kind::Data => EXIT_DATA,
            Kind::Numeric => EXIT_NUMERIC,
            Kind::Internal => EXIT_INTERNAL,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            Kind::Config => "config error",
            Kind::Data => "data error",
            Kind::Numeric => "numeric failure",
            Kind::Internal => "internal error",
        };
        write!(f, "{label}: {}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::Config(_) | CoreError::ChannelPlan(_) => Kind::Config,
            CoreError::NonFinite { .. } => Kind::Numeric,
            CoreError::MissingCache { .. } => Kind::Internal,
            _ => Kind::Data,
        };
        CliError { kind, message: e.to_string() }
    }
}
