use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("simulation fault at t={clock_min} min: non-finite state")]
    SimulationFault { clock_min: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient labels: got {got}, need at least {min}")]
    InsufficientLabels { got: usize, min: usize },

    #[error("label reward {0} outside [-1, 1]")]
    LabelOutOfRange(f64),

    #[error("conflicting duplicate label for episode {episode_id} t={t}")]
    ConflictingLabel { episode_id: u64, t: usize },

    #[error("label references unknown sample: episode {episode_id} t={t}")]
    UnknownSample { episode_id: u64, t: usize },

    #[error("unknown preference function: {0}")]
    UnknownPreference(String),

    #[error("unknown patient: {0}")]
    UnknownPatient(String),

    #[error("unknown experiment: {0}")]
    UnknownExperiment(String),

    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("bad magic bytes in {0} file")]
    BadMagic(&'static str),

    #[error("unsupported {kind} format version {found} (expected {expected})")]
    VersionMismatch {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("truncated {0} file")]
    Truncated(&'static str),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Short machine-readable tag, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SimulationFault { .. } => "simulation_fault",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InsufficientLabels { .. } => "insufficient_labels",
            Error::LabelOutOfRange(_) => "label_out_of_range",
            Error::ConflictingLabel { .. } => "conflicting_label",
            Error::UnknownSample { .. } => "unknown_sample",
            Error::UnknownPreference(_) => "unknown_preference",
            Error::UnknownPatient(_) => "unknown_patient",
            Error::UnknownExperiment(_) => "unknown_experiment",
            Error::NegativeLambda(_) => "negative_lambda",
            Error::Diverged(_) => "diverged",
            Error::BadMagic(_) => "bad_magic",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Truncated(_) => "truncated",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
