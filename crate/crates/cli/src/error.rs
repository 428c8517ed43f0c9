use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] paint_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("server error: {0}")]
    Server(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

/// What `paintctl` prints to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Server(_) => "server",
        }
    }

    /// 2 for bad input, 3 for missing artifacts, 4 for label conflicts,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use paint_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Server(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidParameter(_)
                | E::UnknownPreference(_)
                | E::UnknownPatient(_)
                | E::UnknownExperiment(_)
                | E::NegativeLambda(_)
                | E::LabelOutOfRange(_)
                | E::UnknownSample { .. }
                | E::InsufficientLabels { .. }
                | E::Config(_) => 2,
                E::MissingArtifact(_) => 3,
                E::ConflictingLabel { .. } => 4,
                _ => 1,
            },
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}
