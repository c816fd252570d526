use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] chstab_core::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("verification failed: {}", .0.join(", "))]
    VerifyFailed(Vec<String>),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// 1 config/io, 2 assumption, 3 singular synthesis, 4 divergence, 5 failed verification.
    pub fn exit_code(&self) -> i32 {
        use chstab_core::Error as E;
        match self {
            CliError::Core(E::Assumption(_)) => 2,
            CliError::Core(E::Singular(_)) => 3,
            CliError::Core(E::Divergence { .. }) => 4,
            CliError::VerifyFailed(_) => 5,
            CliError::Core(E::Config(_) | E::Truncation { .. } | E::Discriminant(_))
            | CliError::Config(_)
            | CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        use chstab_core::Error as E;
        match self {
            CliError::Core(E::Assumption(_)) => "assumption",
            CliError::Core(E::Singular(_)) => "singular",
            CliError::Core(E::Divergence { .. }) => "divergence",
            CliError::Core(E::Truncation { .. }) => "truncation",
            CliError::Core(E::Discriminant(_)) => "discriminant",
            CliError::VerifyFailed(_) => "verify",
            CliError::Core(E::Config(_)) | CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            exit_code: self.exit_code(),
            kind: self.kind().to_string(),
            message: self.to_string(),
        }
    }
}

/// Body of `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;
