//! Numerical primitives shared across the estimation pipeline: kernels and
//! Gram matrices, the discretized operator convention, symmetric
//! eigendecomposition and matrix square roots, chi-square tails, AR(1)
//! covariances, and deterministic Gaussian sampling.
//!
//! Integral operators on the grid are stored in the "tilde" convention:
//! an operator with pointwise kernel `A(s,t)` is represented by the matrix
//! `Ã = Δ · (A(t_j, t_k))_{jk}` with `Δ = |T|/m` the rectangle-rule weight.
//! Under this convention operator composition is plain matrix product,
//! operator trace is matrix trace, and operator spectra are matrix spectra.

mod grid;
mod kernel;
mod operator;
mod rng;
mod stat;

pub use grid::Grid;
pub use kernel::{default_kernel, gram_matrix, KernelSpec};
pub use operator::{operator_sqrt, symmetric_eigen, EigenDecomp, OperatorMatrix};
pub use rng::{mvn_sample, RngStream};
pub use stat::{ar1_covariance, chi2_upper_tail};
