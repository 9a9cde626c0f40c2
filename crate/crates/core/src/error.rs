use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("client index {index} out of range for {clients} clients")]
    ClientOutOfRange { index: usize, clients: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("simplex violated in {} round(s), first at t={}: {}", .rounds.len(), .rounds[0].0, .rounds[0].1)]
    Simplex { rounds: Vec<(usize, String)> },

    #[error("iterate diverged at round {round} (|x| = {norm})")]
    Diverged { round: usize, norm: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("exact divergence requires shared curvature; use divergence_sampled instead")]
    NotExact,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
