//! CLI error type with the process exit-code contract: 2 for usage and
//! validation problems, 3 for I/O failures, 4 for numeric degeneration.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

/// Library-side validation failures surface as usage errors.
macro_rules! usage_from {
    ($($ty:ty),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                CliError::Usage(err.to_string())
            }
        })*
    };
}

usage_from!(
    bexp::compose::ComposeError,
    bexp::likelihood::LikelihoodError,
    bexp::transform::TransformError,
    bexp::inference::InferenceError,
    bexp::learning::LearnError,
    bexp::synthetic::SyntheticError,
);

pub type Result<T> = std::result::Result<T, CliError>;
