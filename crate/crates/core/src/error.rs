use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (shapes, ranges, preconditions).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tensor is numerically zero")]
    ZeroTensor,

    #[error("rank {rank} exceeds the admissible bound {bound} for row degree k={k}")]
    RankDeficiency { rank: usize, bound: usize, k: usize },

    #[error("points are numerically collinear (design condition {condition:.3e})")]
    CollinearPoints { condition: f64 },

    #[error("numerical failure: {message} (residual {residual:.3e})")]
    NumericalFailure { message: String, residual: f64 },

    #[error("degenerate scale factor {lambda:.3e} for component {component}")]
    DegenerateScale { component: usize, lambda: f64 },

    #[error("parameter recovery failed: {0}")]
    RecoveryFailure(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Parse(_) => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}
