use std::path::PathBuf;

use mfhover::Error;
use thiserror::Error as ThisError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_COMPUTE: i32 = 4;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("config file {}: {source}", path.display())]
    Config { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    At { path: PathBuf, source: Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::MissingInput(_) => EXIT_USAGE,
            CliError::Config { .. } | CliError::At { .. } => EXIT_FORMAT,
            CliError::Core(source) => core_code(source),
        }
    }
}

fn core_code(e: &Error) -> i32 {
    match e {
        Error::Npy(_)
        | Error::Counts(_)
        | Error::LabelRange { .. }
        | Error::Checkpoint(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => EXIT_FORMAT,
        Error::Shape(_)
        | Error::Patch { .. }
        | Error::Divergence { .. }
        | Error::EmptyDataset
        | Error::Undefined(_)
        | Error::Invalid(_) => EXIT_COMPUTE,
    }
}

/// Attaches the file a core error came from.
pub trait AtPath<T> {
    fn at(self, path: &std::path::Path) -> Result<T, CliError>;
}

impl<T> AtPath<T> for Result<T, Error> {
    fn at(self, path: &std::path::Path) -> Result<T, CliError> {
        self.map_err(|source| CliError::At {
            path: path.to_path_buf(),
            source,
        })
    }
}
