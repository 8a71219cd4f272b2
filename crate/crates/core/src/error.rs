use thiserror::Error;

pub type Result<T, E = TebdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TebdError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("{routine} failed to converge")]
    NoConvergence { routine: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state has zero norm: {0}")]
    ZeroNorm(String),

    #[error("dense state of dimension {dim} exceeds the cap of {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("numerical abort at step {step}: {reason}")]
    NumericalAbort {
        step: usize,
        reason: String,
        /// State at the end of the last completed step.
        last_good: Box<crate::mps::VidalMps>,
    },

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
