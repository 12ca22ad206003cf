//! Dense linear algebra, Gauss-Hermite quadrature and seedable random
//! numbers shared by every other module.

mod matrix;
mod quadrature;
mod rng;

pub use matrix::{Matrix, MatrixError};
pub use quadrature::{gauss_hermite, QuadratureRule};
pub use rng::{derive_seed, Rng};
