use std::io;
use std::path::PathBuf;

use riskconv_core::ErrorKind;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const DOMAIN: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("model document: {0}")]
    Model(String),

    #[error("{0}")]
    Input(String),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] riskconv_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Model(_) | CliError::Input(_) | CliError::Csv(_) => {
                exit::INPUT
            }
            CliError::Core(e) => match e.kind() {
                ErrorKind::Usage => exit::INPUT,
                ErrorKind::Domain => exit::DOMAIN,
                ErrorKind::Numerical => exit::NUMERICAL,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
