use std::path::PathBuf;

/// Everything that can stop a command.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] wbh_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("simulation failed validation: {0}")]
    Validation(String),
}

impl AppError {
    /// 2 for bad input, 3 for numerical trouble.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Core(wbh_core::Error::NumericalFailure(_)) | AppError::Validation(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
