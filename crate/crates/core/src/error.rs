//! Error type shared by the sketch, optimizer and diagnostics modules.

use std::error;
use std::fmt;

/// Errors reported by sketch and optimizer operations.
///
/// Construction-time problems (bad widths, bad hyperparameters) are
/// `Config`; out-of-range item identifiers are `Index`; malformed numeric
/// payloads (non-finite values, wrong lengths, empty inputs) are `Data`;
/// uses of a state object outside its contract are `State`.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration or parameter value.
    Config(String),
    /// Item identifier outside the hashed domain.
    Index { item: usize, domain: usize },
    /// Malformed or non-finite input data.
    Data(String),
    /// Operation not valid for the current state.
    State(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {}", msg),
            Error::Index { item, domain } => {
                write!(f, "item {} outside hashed domain of size {}", item, domain)
            }
            Error::Data(msg) => write!(f, "data error: {}", msg),
            Error::State(msg) => write!(f, "state error: {}", msg),
        }
    }
}

impl error::Error for Error {}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
