use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] uvforge::Error),

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }
}
