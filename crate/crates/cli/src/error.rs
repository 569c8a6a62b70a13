use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("verification failed")]
    Verification,
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Engine errors carrying an IO failure map to the IO exit code.
    pub fn engine(path: impl AsRef<Path>, e: probattn::Error) -> Self {
        match e {
            probattn::Error::Io(source) => CliError::io(path, source),
            other => CliError::Usage(format!("{}: {other}", path.as_ref().display())),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Verification => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
        })
    }
}
