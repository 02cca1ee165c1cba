//! Compositional kernels of deep multilayer perceptrons, studied through the
//! duality between activation functions and branching-process generating
//! functions.
//!
//! The library covers:
//!
//! - Hermite expansions of activations and Monte-Carlo coefficient estimation
//!   ([`hermite`]),
//! - the activation/PGF duality, offspring moments, extinction probabilities
//!   and phase classification ([`duality`]),
//! - Galton-Watson simulation and exact generation-size distributions
//!   ([`branching`]),
//! - compositional kernel evaluation, limit curves and empirical kernel
//!   matrices ([`kernel`]),
//! - depth calculators for epsilon-closeness and kappa-memorization
//!   ([`memorization`]),
//! - Legendre/spherical-harmonic spectral decompositions ([`spectral`]),
//! - random-features constructions and the truncation/implicit-regularization
//!   decomposition ([`features`]),
//! - sphere datasets, packings and correlation statistics ([`sphere`]).
//!
//! Everything stochastic takes an explicit seed and is bit-reproducible.

pub mod branching;
pub mod cli;
pub mod duality;
pub mod features;
pub mod hermite;
pub mod kernel;
pub mod memorization;
pub mod rng;
pub mod spectral;
pub mod sphere;

use thiserror::Error;

/// Default Monte-Carlo sample count for coefficient estimation.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
/// Default Hermite truncation level.
pub const DEFAULT_TRUNCATION: usize = 20;
/// Default degree cap for truncated power-series coefficients.
pub const DEFAULT_DEGREE_CAP: usize = 512;
/// Normalization tolerance for exactly-specified coefficient sequences.
pub const NORM_TOL_EXACT: f64 = 1e-8;
/// PGF mass-balance tolerance: coefficients plus tail must sum to 1.
pub const PGF_MASS_TOL: f64 = 1e-10;

/// Normalization tolerance for Monte-Carlo estimated coefficient sequences.
pub fn norm_tol_estimated(truncation: usize, samples: usize) -> f64 {
    3.0 * (truncation.max(1) as f64) / (samples as f64).sqrt()
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code: 2 for validation failures, 3 for numerical
    /// non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::Degenerate(_)
            | Error::NotPositiveDefinite(_) => 2,
            Error::NonConvergence(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
