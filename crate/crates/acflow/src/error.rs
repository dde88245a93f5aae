use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform for the requested operation.
    #[error("shape mismatch in `{op}`: {details}")]
    Shape { op: &'static str, details: String },

    /// An input lies outside an operation's valid domain (log of a
    /// non-positive value, division by zero, ...).
    #[error("domain violation in `{op}`: {details}")]
    Domain { op: &'static str, details: String },

    /// A transform hit a numerical failure (singular or ill-conditioned
    /// weight matrix). `transform` is the index within the stack when known.
    #[error("numerical failure{}: {details}", fmt_transform(.transform))]
    Numerical {
        transform: Option<usize>,
        details: String,
    },

    #[error("mask error: {0}")]
    Mask(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_transform(idx: &Option<usize>) -> String {
    match idx {
        Some(i) => format!(" in transform {i}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a stack index to a numerical error that bubbled up from a
    /// transform, leaving other errors untouched.
    pub fn with_transform_index(self, index: usize) -> Self {
        match self {
            Error::Numerical { details, .. } => Error::Numerical {
                transform: Some(index),
                details,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
