use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("audit failure: {0}")]
    Audit(String),

    #[error("divergence{}: {source}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    Divergence {
        context: Option<String>,
        source: pdflow::Error,
    },

    #[error("claim not reproduced: {0}")]
    Claim(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(pdflow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Audit(_) => 3,
            CliError::Divergence { .. } => 4,
            CliError::Claim(_) | CliError::Io { .. } | CliError::Solver(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a label such as the offending k multiplier to a divergence.
    pub(crate) fn with_context(self, context: impl Into<String>) -> Self {
        match self {
            CliError::Divergence { source, .. } => CliError::Divergence {
                context: Some(context.into()),
                source,
            },
            other => other,
        }
    }
}

impl From<pdflow::Error> for CliError {
    fn from(e: pdflow::Error) -> Self {
        use pdflow::Error as E;
        match e {
            E::InvalidParameter { .. } | E::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            E::AuditFailed(msg) => CliError::Audit(msg),
            E::Divergence { .. } => CliError::Divergence {
                context: None,
                source: e,
            },
            other => CliError::Solver(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
