use std::path::PathBuf;

use hullscan_tensor::checkpoint::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no ship found: {0}")]
    NoShip(String),
    #[error("record {id}: missing annotation file {}", file.display())]
    MissingAnnotation { id: String, file: PathBuf },
    #[error("nothing to train on: {0}")]
    Empty(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("encoding error: {0}")]
    Encode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Wraps `self` with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// True for bad user input: invalid config, malformed files, missing
    /// annotations.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::MissingAnnotation { .. }
                | Error::Toml(_)
                | Error::Json(_)
        )
    }
}
