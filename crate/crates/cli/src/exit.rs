use std::fmt;

use abdux::Error;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Failure = 1,
    /// A budget ran out; the output is sound but may be incomplete.
    Budget = 2,
    Parse = 3,
    Invariant = 4,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub message: String,
}

impl CliError {
    pub fn new(status: Status, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    pub fn invariant(message: impl Into<String>) -> Self {
        Self::new(Status::Invariant, message)
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Status::Failure, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } => Status::Parse,
            Error::Dimension { .. }
            | Error::InvalidNetwork(_)
            | Error::InvalidInstance(_)
            | Error::ClassMismatch { .. }
            | Error::InvalidQuery(_)
            | Error::InvalidPartition(_)
            | Error::InvalidOrdering(_) => Status::Invariant,
            e if e.is_budget() => Status::Budget,
            _ => Status::Failure,
        };
        Self::new(status, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Status::Failure, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
