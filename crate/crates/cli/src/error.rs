use std::fmt;
use std::io;
use std::path::PathBuf;

use hitl_core::SimError;
use thiserror::Error;

/// A single violated constraint, `field` dotted from the config root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub constraint: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    pub fn from_sim(section: &str, e: SimError) -> Self {
        match e {
            SimError::InvalidParameter { field, constraint } => Self::new(format!("{section}.{field}"), constraint),
            other => Self::new(section, other.to_string()),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`: requires {}", self.field, self.constraint)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config:\n{}", list(.0))]
    Validation(Vec<FieldError>),

    #[error("`{command}` cannot run a `{mode}` config")]
    ModeMismatch { command: String, mode: String },

    #[error("{0}\nhint: every cell had zero reward rate; raise `trials`, lengthen `time.horizon`, or strengthen `lip.inputs` relative to `lip.sigma`")]
    Degenerate(SimError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Sim(SimError),
}

fn list(errs: &[FieldError]) -> String {
    errs.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::DegenerateSurface => CliError::Degenerate(e),
            SimError::InvalidParameter { .. } | SimError::InvalidSchedule(_) | SimError::InvalidGrid(_) => {
                CliError::Validation(vec![FieldError::from_sim("config", e)])
            }
            other => CliError::Sim(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) | CliError::ModeMismatch { .. } => 2,
            CliError::Degenerate(_) => 3,
            CliError::Io { .. } | CliError::Sim(_) => 1,
        }
    }
}
