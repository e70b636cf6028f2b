use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AdlabError>;

#[derive(Debug, Error)]
pub enum AdlabError {
    #[error("parameter `{name}` = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("cascade conditions violated: {0}")]
    Conditions(String),

    #[error("sequence `{sequence}` leaves the f64 range at q = {q}")]
    Underflow { sequence: &'static str, q: usize },

    #[error("schedule infeasible at level {level}: {reason}")]
    Schedule { level: usize, reason: String },

    #[error("grid n = {n} below resolution floor {floor}")]
    Resolution { n: usize, floor: usize },

    #[error("grid size {0} must be a power of two and at least 8")]
    GridSize(usize),

    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(usize, usize),

    #[error("interval [{t0}, {t1}] is not contained in stage window [{w0}, {w1}]")]
    StageBoundary { t0: f64, t1: f64, w0: f64, w1: f64 },

    #[error("non-finite value encountered at t = {0}")]
    NonFinite(f64),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AdlabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AdlabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            AdlabError::Resolution { .. } => 3,
            AdlabError::Invariant(_)
            | AdlabError::NonFinite(_)
            | AdlabError::Conditions(_)
            | AdlabError::Schedule { .. } => 2,
            _ => 1,
        }
    }
}
