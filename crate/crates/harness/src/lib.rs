//! Configuration, study drivers and persistence for the mean-field experiments.

pub mod config;
pub mod error;
pub mod persist;
pub mod result;
pub mod studies;

pub use config::{ExperimentConfig, StudyKind};
pub use error::{HarnessError, Result};
pub use result::{Cell, StudyResult};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MFL_OUT_DIR";
