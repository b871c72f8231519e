use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to ingest {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    #[error("image has no foreground pixels")]
    BlankImage,

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("numerical failure in {context}{}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        context: String,
        iteration: Option<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn numerical(context: impl Into<String>, iteration: Option<usize>) -> Self {
        Error::Numerical {
            context: context.into(),
            iteration,
        }
    }
}
