use thiserror::Error;

/// Library-wide error type. Variants map onto the failure families the
/// pipeline distinguishes: bad configuration, malformed or mismatched data,
/// degenerate inputs to a numeric routine, and diverged training.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent. The message
    /// names the offending key.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Vector or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An input collection that must be non-empty was empty.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A value violated a domain requirement (e.g. a negative distance).
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// A training batch cannot produce any valid triplet.
    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    /// A loss or gradient became non-finite.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// A training set cannot be fit (e.g. only one class present).
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    /// Prediction was requested from a model that has never been fitted.
    #[error("model not fitted: {0}")]
    NotFitted(String),

    /// The identity registry is empty; the first query must enroll
    /// unconditionally instead of asking for a nearest candidate.
    #[error("empty registry: first query must enroll unconditionally")]
    EmptyRegistry,

    /// A dataset file does not match the checksum recorded in its manifest.
    #[error("checksum mismatch for {path}: manifest {expected}, file {actual}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        actual: String,
    },

    /// A data, snapshot, or metrics file could not be parsed.
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    /// Generated clusters failed the separation self-check.
    #[error("generator self-check failed: {0}")]
    GeneratorSelfCheck(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a path to a raw io error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that indicate a bad configuration rather than a
    /// runtime failure; the CLI maps these to a distinct exit code.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
