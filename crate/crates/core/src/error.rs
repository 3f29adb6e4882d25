use thiserror::Error;

/// Errors raised by the learning models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// Input outside the model's domain (bad index, wrong dimension, ...).
    #[error("input domain error: {0}")]
    InputDomain(String),
    /// The operation would leave the model in a state no history can produce,
    /// e.g. forgetting a record that was never incorporated.
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

/// Errors raised while reading datasets.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

/// Invalid configuration values.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid config `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Errors raised while orchestrating rounds.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FederationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    /// A worker's step or delta was rejected.
    #[error("device {device}: {source}")]
    Device { device: usize, source: ModelError },
}
