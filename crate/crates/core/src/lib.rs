//! Numerical laboratory for Lifshitz tails of random Schrödinger operators
//! `phi(-Laplacian) + V` with subordinate kinetic terms and alloy-type
//! random potentials.
//!
//! The crate is organised bottom-up:
//!
//! - [`bernstein`]: Bernstein function catalog, subordination moments and free heat kernels.
//! - [`torus`]: Fourier eigenvalues and heat kernels on the torus, and the
//!   matrix-free discretised Schrödinger operator with its block Lanczos eigensolver.
//! - [`alloy`]: single-site profiles, lattice laws, configurations and periodised potentials.
//! - [`bounds`]: Temple, binomial-tail and Dirichlet-box eigenvalue bounds.
//! - [`rates`]: the rate functions `g`, `j`, `x_t`, `h` and the exponential Tauberian conversion.
//! - [`lab`]: ensemble estimation of the integrated density of states and its
//!   Laplace transform, scaling studies and report output.

pub mod error;
pub mod quadrature;
pub mod special;
mod textform;

pub mod bernstein;
pub mod torus;
pub mod alloy;
pub mod bounds;
pub mod rates;
pub mod lab;

pub use error::{Error, Result};
