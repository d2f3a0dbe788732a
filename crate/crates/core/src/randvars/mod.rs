//! Gaussian random variables.
//!
//! [`Gaussian`] is the belief type every solver returns. It is closed under
//! affine maps and linear-Gaussian conditioning, supports seeded sampling and
//! marginalization, and serializes to `{"mean": [...], "cov": [[...]]}` with
//! shortest round-trip float formatting.

mod gaussian;
mod matrix;

pub(crate) use gaussian::check_innovation;
pub use gaussian::Gaussian;
pub use matrix::MatrixGaussian;
