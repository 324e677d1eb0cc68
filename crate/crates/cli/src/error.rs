use std::fmt;
use std::path::Path;

use pual_core::ErrorKind;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// A one-line diagnostic and the process exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn file(path: &Path, err: std::io::Error) -> Self {
        Self::data(format!("{}: {err}", path.display()))
    }

    /// A library error, prefixed by the flag, file or step it came from.
    pub fn core(context: &str, err: pual_core::Error) -> Self {
        let code = match err.kind() {
            ErrorKind::Validation => EXIT_USAGE,
            ErrorKind::Data => EXIT_DATA,
            ErrorKind::Numerical => EXIT_NUMERICAL,
        };
        CliError {
            code,
            message: format!("{context}: {err}"),
        }
    }

    pub fn core_at(path: &Path, err: pual_core::Error) -> Self {
        Self::core(&path.display().to_string(), err)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}
