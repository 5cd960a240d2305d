use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("missing prerequisites: {}", .0.join(", "))]
    Missing(Vec<String>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: sevlogit::Error,
    },

    #[error("estimation failed for {}", .0.join("; "))]
    Estimation(Vec<String>),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn core(context: impl Into<String>, source: sevlogit::Error) -> Self {
        CliError::Core {
            context: context.into(),
            source,
        }
    }

    /// 2 config/schema, 3 missing prerequisites, 4 I/O, 5 estimation.
    pub fn exit_code(&self) -> i32 {
        use sevlogit::Error as E;
        match self {
            CliError::Config { .. } => 2,
            CliError::Missing(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Estimation(_) => 5,
            CliError::Core { source, .. } => match source {
                E::Parse { .. } | E::Argument(_) | E::Schema(_) | E::Row { .. } | E::SpecMismatch(_) => 2,
                E::Io(_) | E::Csv(_) => 4,
                _ => 5,
            },
        }
    }
}
