use std::path::PathBuf;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("checkpoint {0} could not be loaded: {1}")]
    MissingCheckpoint(PathBuf, #[source] chefs_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Core(#[from] chefs_core::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::MissingCheckpoint(..) => "MISSING_CHECKPOINT",
            ServiceError::Config(_) => "CONFIG",
            ServiceError::Io(..) => "IO",
            ServiceError::Core(e) => e.code(),
        }
    }
}
