use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    ModelInvalid(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    #[error("grid resolution insufficient: {message} (tail value {tail:e})")]
    Resolution { message: String, tail: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("particle cloud not covered by grid: outside mass {outside_mass:e}")]
    Coverage { outside_mass: f64 },

    #[error("parameter gate failed: {0}")]
    Gate(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, residual: f64) -> Self {
        Error::Numerical {
            message: message.into(),
            residual,
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }

    pub(crate) fn model(message: impl Into<String>) -> Self {
        Error::ModelInvalid(message.into())
    }
}
