use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("memory guard: {entries} complex entries requested, limit is {limit}")]
    MemoryGuard { entries: u128, limit: usize },

    #[error("size guard: matrix dimension {dim} exceeds the dense limit {limit}")]
    SizeGuard { dim: usize, limit: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}
