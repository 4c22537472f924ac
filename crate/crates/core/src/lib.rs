//! Numerics for the mean-field limit of bosons with Coulomb-type pair
//! interaction: spectral Hartree and N-body Schrödinger propagation on a
//! periodic grid, reduced density matrices and the partial-trace calculus,
//! BBGKY hierarchy residuals, and numerical checks of the operator
//! inequalities behind the limit.

pub mod bosonic;
pub mod density;
pub mod error;
pub mod fft;
pub mod grid;
pub mod hartree;
pub mod hierarchy;
pub mod linalg;
pub mod nbody;
pub mod oplemmas;
pub mod potential;
pub mod wavefn;

pub use error::{Error, Result};
pub use grid::{GridSpec, MemoryGuard};
pub use potential::{CoreModel, PairPotential, PotentialParams, PotentialSplit, Sign};
pub use wavefn::WaveFn;
