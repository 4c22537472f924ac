use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] mfl_core::Error),

    #[error("persistence error: {0}")]
    Persistence(String),
}

impl HarnessError {
    /// Process exit code: 2 config, 3 memory guard, 4 numerical instability, 5 persistence.
    pub fn exit_code(&self) -> i32 {
        use mfl_core::Error as E;
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(E::MemoryGuard { .. } | E::SizeGuard { .. }) => 3,
            HarnessError::Core(E::NonFinite(_) | E::Instability(_) | E::LinearAlgebra(_)) => 4,
            HarnessError::Core(_) => 2,
            HarnessError::Persistence(_) => 5,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Persistence(e.to_string())
    }
}
