use thiserror::Error;

use crate::neural::MlpModel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Shapes or sizes do not agree.
    #[error("size error: {0}")]
    Size(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("index error: {0}")]
    Index(String),
    /// A loss or model combination the differentiation engine does not support.
    #[error("build error: {0}")]
    Build(String),
    #[error("format error: {0}")]
    Format(String),
    /// Training produced a non-finite loss. Carries the parameters from the
    /// last step whose loss was finite.
    #[error("training diverged at step {step}: {msg}")]
    Training {
        step: usize,
        msg: String,
        last_good: Option<Box<MlpModel>>,
    },
    #[error("sampling failed at step {step}: {msg}")]
    Sampling { step: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn size(msg: impl Into<String>) -> Self {
        Error::Size(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
