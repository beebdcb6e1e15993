//! Parallel-in-time spectral deferred correction solvers and reduced-gradient
//! optimal control for parabolic PDEs.

pub mod error;
pub mod field;
pub mod gradient;
pub mod harness;
pub mod optimizer;
pub mod pfasst;
pub mod problems;
pub mod quadrature;
pub mod sweeper;

pub use error::{Error, Result};
