use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("state diverged (non-finite) at step {step}")]
    Divergence { step: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter `{field}`: requires {constraint}")]
    InvalidParameter { field: String, constraint: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate reward surface: no cell produced a correct decision")]
    DegenerateSurface,
}

impl SimError {
    pub(crate) fn param(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        SimError::InvalidParameter {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
