use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::io::IoError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const IO: u8 = 1;
    pub const REGISTRATION: u8 = 2;
    pub const CORPUS: u8 = 3;
    pub const USAGE: u8 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("cannot write {}: {message}", path.display())]
    Write { path: PathBuf, message: String },
    #[error("registration failed: {0}")]
    Registration(preshape_align::Error),
    #[error("{0}")]
    Corpus(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) | CliError::Write { .. } => exit::IO,
            CliError::Registration(_) => exit::REGISTRATION,
            CliError::Corpus(_) => exit::CORPUS,
            CliError::Usage(_) | CliError::Config(_) => exit::USAGE,
        }
    }

    pub(crate) fn write(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Write {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}
