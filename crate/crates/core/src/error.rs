use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("block {index} is not square ({rows}x{cols})")]
    NonSquareBlock {
        index: usize,
        rows: usize,
        cols: usize,
    },

    #[error("negative weight {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "matrix is not symmetric (max asymmetry {0:e}); the eigenvalue-count \
         identification results only cover undirected networks"
    )]
    Asymmetric(f64),

    #[error("{factor} is singular")]
    SingularFactor { factor: &'static str },

    #[error("{what} is singular or ill-conditioned (condition number {condition:e})")]
    IllConditioned { what: &'static str, condition: f64 },

    #[error("regularization scheme violation: {0}")]
    Scheme(String),

    #[error("degenerate projector: {0}")]
    DegenerateProjector(String),

    #[error("every point of the selection curve is non-finite")]
    NoFiniteCriterion,

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularFactor { .. }
                | Error::IllConditioned { .. }
                | Error::DegenerateProjector(_)
                | Error::NoFiniteCriterion
                | Error::Scheme(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
