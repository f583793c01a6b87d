use thiserror::Error;

/// Invalid configuration value, named by its dotted field path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("field `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("distance must be positive, got {0} km")]
    NonPositiveDistance(f64),
    #[error("bandwidth share must be within (0, 1], got {0}")]
    InvalidShare(f64),
}
