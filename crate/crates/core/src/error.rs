use thiserror::Error;

/// Errors produced by the waveform, channel, and estimation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("frame overflow: {pilots} pilots and 2x{guard} guards do not fit in {n} symbols")]
    FrameOverflow {
        pilots: usize,
        guard: usize,
        n: usize,
    },

    #[error("pilot window [{start}, {end}) exceeds frame of length {n}")]
    WindowOutOfRange { start: i64, end: i64, n: usize },

    #[error("observation has zero energy")]
    ZeroObservation,

    #[error("matrix is numerically singular: {0}")]
    Singular(&'static str),

    #[error("unknown estimator tag `{0}`")]
    UnknownEstimator(String),

    #[error("grid index {index} is not covered by any group")]
    Uncovered { index: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("serialization error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
