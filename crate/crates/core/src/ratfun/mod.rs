//! Polynomial and rational-function algebra in the Laplace variable `s`.
//!
//! Everything here is immutable after construction; operations return new
//! values.

mod matrix;
mod poly;
mod rational;
mod roots;

pub use matrix::{
    sequence_transform, similarity_diagonalize, undiagonalize, AdmittanceMatrix2, StructureTag,
    DEFAULT_COEFF_TOL,
};
pub use poly::CPolynomial;
pub use rational::{RationalFunction, Realified, DEFAULT_POLE_GUARD};
pub use roots::poly_roots;
