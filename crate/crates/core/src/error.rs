use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),

    #[error("level {level} out of range for subsystem `{label}` of dimension {dim}")]
    LevelOutOfRange { label: String, level: usize, dim: usize },

    #[error("subsystem `{label}` must be {expected}")]
    KindMismatch { label: String, expected: &'static str },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("operator is not hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical invariant, as opposed to bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}
