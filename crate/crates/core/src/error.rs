use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("enumeration cap exceeded: 2^{bits} patterns (cap 2^{cap})")]
    EnumerationCap { bits: usize, cap: usize },

    #[error("pilot matrix is not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("parse error in {context}: {reason}")]
    Parse { context: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            reason: reason.into(),
        }
    }
}
