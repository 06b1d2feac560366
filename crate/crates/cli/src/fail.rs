//! Exit codes: 2 bad arguments, 3 computation failure, 4 bad or mismatched data.

use std::fmt;

use embedlens_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Args = 2,
    Compute = 3,
    Data = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub code: ExitCode,
    pub message: String,
}

impl Failure {
    pub fn args(message: impl Into<String>) -> Self {
        Failure {
            code: ExitCode::Args,
            message: message.into(),
        }
    }

    pub fn compute(message: impl Into<String>) -> Self {
        Failure {
            code: ExitCode::Compute,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: ExitCode::Data,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter(_) | Error::InvalidNode { .. } => ExitCode::Args,
            Error::Unknown { kind, .. } if *kind != "space" => ExitCode::Args,
            Error::Numerical(_) | Error::Cancelled => ExitCode::Compute,
            _ => ExitCode::Data,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;
