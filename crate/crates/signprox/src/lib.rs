//! One-bit compressed stochastic proximal-gradient optimization.
//!
//! The crate provides:
//!
//! - [`numerics`]: dense vectors/matrices and seeded, platform-independent
//!   random number generation,
//! - [`prox`]: proximal operators (soft-thresholding, nonnegativity,
//!   anisotropic 2D total variation, linearizations),
//! - [`oracle`]: proximal-gradient mappings, mini-batch and noise-injected
//!   stochastic estimates, and the gradient mapping,
//! - [`solver`]: the SPGM, signProx, signSGD, and reference proximal-gradient
//!   iterations with per-iteration traces,
//! - [`problem`]: phase-retrieval and LASSO instances plus the Shepp-Logan
//!   phantom,
//! - [`theory`]: estimation of smoothness/variance constants and empirical
//!   verification of the convergence bounds,
//! - [`experiment`]: config-file driven experiment runner with CSV traces.

pub mod experiment;
pub mod numerics;
pub mod oracle;
pub mod problem;
pub mod prox;
pub mod solver;
pub mod theory;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("divergence at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
