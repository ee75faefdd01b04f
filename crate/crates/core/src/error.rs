use std::path::PathBuf;

use thiserror::Error;

use crate::data::Timestamp;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("timestamp {ts} with window start {needed} lies outside horizon [{start}, {end})")]
    OutOfHorizon {
        ts: Timestamp,
        needed: Timestamp,
        start: Timestamp,
        end: Timestamp,
    },

    #[error("no profile for user {0}")]
    MissingProfile(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate scores: {0}")]
    DegenerateScores(String),

    #[error("no historical cohort: full-window positive count is zero")]
    NoHistory,

    #[error("inconsistent cohort: {short} short-window positives exceed {full} full-window positives")]
    InconsistentCohort { short: usize, full: usize },

    #[error("missing g' score for unlabeled user {0}")]
    IncompleteScores(String),

    #[error("dimension mismatch: model has {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),

    #[error("degenerate calibration: {0}")]
    DegenerateCalibration(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Wrap this error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 config error, 3 data error, 4 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) => 2,
            Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
