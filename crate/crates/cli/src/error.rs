//! Error type shared by the runner library and the binary, carrying the
//! process exit code: configuration problems exit 2, I/O failures exit 3.

use std::fmt;
use std::io;

#[derive(Debug)]
pub enum CliError {
    /// Invalid or inconsistent configuration, including missing run
    /// artifacts a command needs as input. Exit code 2.
    Config(String),
    /// Failed reads or writes of run outputs. Exit code 3.
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {}", msg),
            CliError::Io(e) => write!(f, "i/o error: {}", e),
        }
    }
}

impl std::error::Error for CliError {}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<sketch_optim::Error> for CliError {
    fn from(e: sketch_optim::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<toml::ser::Error> for CliError {
    fn from(e: toml::ser::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
