//! Two-stage causal estimation for scalar outcomes with an endogenous
//! functional exposure and high-dimensional scalar instruments/controls.
//!
//! The model is a pair of linked linear equations: a function-on-scalar
//! exposure model `Z_i(t) = Σ_ℓ X_iℓ C_ℓ(t) + E_i(t)` and an outcome model
//! `Y_i = X_iᵀβ + ∫ Z_i(t) B(t) dt + ε_i`, where the exposure error process
//! may be correlated with the outcome error (endogeneity). Estimation
//! proceeds in three steps:
//!
//! 1. [`screening`] — marginal screening for `p ≫ n` (sure independence
//!    screening on the outcome, distance-correlation screening on the
//!    functional exposure);
//! 2. [`exposure`] — group support detection and root finding (GSDAR) for the
//!    exposure model: exact L0 sparsity over covariates with an RKHS
//!    smoothness penalty, yielding fitted curves `Ẑ_i`;
//! 3. [`outcome`] — an L0-sparse partial functional regression of `Y` on `X`
//!    and `Ẑ`, which partials out the endogenous variation.
//!
//! [`inference`] provides a nullity test for the functional coefficient
//! calibrated by Welch–Satterthwaite moment matching, [`ivcheck`] decides
//! identifiability under possibly invalid instruments by exhaustive subset
//! enumeration, [`scale`] adds divide-and-conquer over subjects and sliding
//! windows over the functional domain, and [`datagen`] + [`pipeline`] supply
//! deterministic simulation designs and a Monte Carlo harness.
//!
//! Runnable demonstrations of each capability live in `examples/`; the thin
//! `flsem` binary exposes the same functionality as subcommands.

pub mod datagen;
pub mod error;
pub mod exposure;
pub mod inference;
pub mod io;
pub mod ivcheck;
pub mod metrics;
pub mod numerics;
pub mod outcome;
pub mod pipeline;
pub mod scale;
pub mod screening;

pub mod cli;

pub use error::{FlsemError, Result};
