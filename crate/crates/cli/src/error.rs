use orthocode::Error as CoreError;
use serde::Serialize;
use thiserror::Error;

/// Failure of a CLI command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(CoreError),
    #[error("{0}")]
    Constraint(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Constraint(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Numerical(_) => "numerical",
            CliError::Constraint(_) => "constraint",
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a str,
            exit_code: i32,
            message: String,
        }
        serde_json::to_string(&Record {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("plain record serialises")
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) | CoreError::InvalidGeometry(m) => CliError::Config(m),
            e @ CoreError::FilterTooShort { .. } => CliError::Config(e.to_string()),
            CoreError::ConstraintViolation(m) => CliError::Constraint(m),
            other => CliError::Numerical(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
