use std::fmt;

use thiserror::Error;

/// One violated constraint on a configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<FieldError>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown {kind} preset `{name}`")]
    UnknownPreset { kind: &'static str, name: String },

    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("infeasible: {reason}")]
    Infeasible { reason: String },

    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn infeasible(reason: impl Into<String>) -> Self {
        Error::Infeasible {
            reason: reason.into(),
        }
    }
}

impl Error {
    /// Process exit code: 2 configuration, 3 infeasible, 4 simulation or
    /// invariant failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_)
            | Error::Parse(_)
            | Error::UnknownPreset { .. }
            | Error::SchemaVersion { .. }
            | Error::Usage(_)
            | Error::Io(_) => 2,
            Error::Infeasible { .. } => 3,
            Error::Sim(_) | Error::Invariant(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
