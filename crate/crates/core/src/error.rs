use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// A matrix that must be positive definite (or of full rank) is not.
    #[error("singular structure: {0}")]
    Singular(String),

    #[error("search budget exceeded: {candidates} candidates, cap is {cap}")]
    BudgetExceeded { candidates: u128, cap: u128 },

    #[error("degenerate reference design: criterion of the reference is zero")]
    DegenerateReference,

    /// No candidate design can make the problem well posed (for example d > n).
    #[error("numerically infeasible: {0}")]
    Infeasible(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
