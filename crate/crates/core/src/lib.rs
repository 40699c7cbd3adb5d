//! Multilevel diagonal preconditioners for the hypersingular integral
//! equation on 2D polygonal boundaries.
//!
//! * [`mesh`]: boundaries, bisection refinement and the level hierarchy
//! * [`assembly`]: Galerkin matrices, load vectors and a quadrature oracle
//! * [`precond`]: LMLD, GMLD, HB and diagonal preconditioners
//! * [`solve`]: GMRES, Cholesky and spectra of preconditioned operators
//! * [`harness`]: the experiment driver behind the `aswarz` binary

pub mod assembly;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod precond;
pub mod solve;

pub use error::{Error, Result};
