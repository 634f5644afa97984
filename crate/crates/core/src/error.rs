use thiserror::Error;

use crate::dynamics::PathRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected cutoff {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A coefficient became non-finite or exceeded the blow-up threshold.
    /// `partial` carries whatever was recorded before the failure.
    #[error("blow-up at t = {t}: max |c_k| = {max_abs:e} on mode ({k1}, {k2})")]
    BlowUp {
        t: f64,
        max_abs: f64,
        k1: i32,
        k2: i32,
        partial: Option<Box<PathRecord>>,
    },

    #[error("invariant violated: {what} (worst at t = {worst_t}, value {value:e})")]
    Invariant { what: String, worst_t: f64, value: f64 },

    #[error("degenerate noise: q_k = 0 on required mode ({k1}, {k2})")]
    Degenerate { k1: i32, k2: i32 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
