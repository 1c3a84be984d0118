//! Dense least squares through randomized preconditioned normal equations.
//!
//! A triangular preconditioner `R_s` is taken from the thin QR of a small
//! randomized sketch `S F D A`. The crate solves `min ||Ax - b||` four ways
//! (Householder QR, plain normal equations, preconditioned normal equations
//! and half-preconditioned normal equations), evaluates perturbation bounds
//! for each from measured quantities, and carries Monte Carlo and
//! perturbation-injection oracles that check those bounds independently.
//!
//! Module map:
//!
//! - [`dense`]: matrix type, QR, LU, Cholesky, Jacobi singular values, Matrix Market IO
//! - [`randomize`]: seeded streams, DCT-2 smoothing, row sampling, coherence
//! - [`problem`]: synthetic problems with known solution, condition and residual
//! - [`preconditioner`]: sketch, factor, and apply `R_s`
//! - [`solvers`]: QR, NE, PNE and HPNE solution paths
//! - [`bounds`]: perturbation bound evaluation
//! - [`validation`]: perturbation injection and coverage experiments
//! - [`experiment`]: residual sweeps and their CSV output

pub mod bounds;
pub mod dense;
pub mod error;
pub mod experiment;
pub mod preconditioner;
pub mod problem;
pub mod randomize;
pub mod solvers;
pub mod validation;

pub use dense::{DenseMatrix, EPS};
pub use error::{Error, Result};
