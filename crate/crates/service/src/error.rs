use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),

    /// The project is not in a state that allows the request, such as
    /// expanding before any training finished.
    #[error("{0}")]
    Conflict(String),

    #[error("{message}")]
    BadRequest {
        message: String,
        field: Option<String>,
    },

    /// A persisted project is missing an artifact or holds a corrupt one.
    #[error("{0}")]
    Corrupt(String),

    #[error(transparent)]
    Core(#[from] termset_core::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ServiceError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ServiceError::BadRequest {
            message: message.into(),
            field: None,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use termset_core::Error as E;
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::BadRequest { .. } => "bad_request",
            ServiceError::Corrupt(_) => "corrupt_project",
            ServiceError::Core(e) => match e {
                E::NotFound(_) => "not_found",
                E::InvalidInput(_) | E::UndefinedSimilarity => "bad_request",
                E::Mode(_) => "mode_error",
                E::Encoding { .. } | E::Conllu { .. } | E::Format { .. } | E::Csv(_) | E::Json(_) => {
                    "bad_data"
                }
                E::Training(_) => "training_failed",
                E::Io(_) => "io_error",
            },
            ServiceError::Io(_) => "io_error",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ServiceError::BadRequest { field, .. } => field.as_deref(),
            _ => None,
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
