use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed line in one of the text formats. Line numbers are 1-based.
    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Precondition(String),

    #[error("unknown word(s) with no lexicon entry: {}", .0.join(" "))]
    UnknownWords(Vec<String>),

    #[error("alignment count (|e|+1)^|f| = {base}^{exponent} overflows u128")]
    Overflow { base: u64, exponent: u32 },

    #[error("no finite-scoring hypothesis at position {position}")]
    NoPath { position: usize },

    #[error("search space of {size} paths exceeds the brute-force guard of {limit}")]
    GuardExceeded { size: f64, limit: f64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn parse(origin: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or arguments rather than a bug.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Invariant(_))
    }
}
