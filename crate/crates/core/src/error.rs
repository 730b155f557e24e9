use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("model format error at {location}: {message}")]
    ModelFormat { location: String, message: String },

    #[error("unknown word `{0}`")]
    UnknownWord(String),

    #[error("text has {len} words but the model accepts at most {max}")]
    TooLong { len: usize, max: usize },

    #[error("word index {index} out of range for a text of {len} words")]
    InvalidIndex { index: usize, len: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("resource exhausted after {splits_used} splits")]
    ResourceExhausted { splits_used: usize },

    #[error("no result within {iterations} iterations")]
    IterationLimit { iterations: usize },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ModelFormat {
            location: location.into(),
            message: message.into(),
        }
    }
}
