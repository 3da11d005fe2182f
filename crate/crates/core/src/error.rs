use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Unreadable, malformed, or undecodable input data.
    #[error("input error: {0}")]
    Input(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("shape error: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite values during training or inference.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Self {
        Error::Shape {
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }
}
