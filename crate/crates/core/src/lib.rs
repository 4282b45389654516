//! Pseudo-spectral solvers for compressible non-Newtonian Navier–Stokes
//! equations on the periodic torus [−1,1]^d.

pub mod error;
pub mod constitutive;
pub mod corpus;
pub mod fixedpoint;
pub mod fields;
pub mod lagrangian;
pub mod linsolve;
pub mod oracle;
pub mod symbol;
pub mod tensor;

pub use error::{Error, Result};
