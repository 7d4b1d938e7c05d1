//! Numerical optimization primitives.

pub mod bfgs;
pub mod brent;
