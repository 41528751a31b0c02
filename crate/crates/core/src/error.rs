//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A matrix handed to a symmetric routine was not square or not symmetric.
    #[error("matrix is not symmetric: max |a_ij - a_ji| = {max_asym:.3e} exceeds tolerance")]
    NotSymmetric { max_asym: f64 },

    /// A matrix contained NaN or infinite entries.
    #[error("matrix has non-finite entries")]
    NonFiniteMatrix,

    /// An assembled covariance had an eigenvalue below the clamp tolerance.
    /// This signals that the ascent radius is too large for the first-order
    /// covariance expansion to stay positive semi-definite.
    #[error("indefinite covariance: eigenvalue {min_eigenvalue:.6e} below -{clamp_tol:.1e}")]
    IndefiniteCovariance { min_eigenvalue: f64, clamp_tol: f64 },

    /// A state became non-finite during integration or iteration.
    #[error("divergence at step {step}")]
    Divergence { step: usize },

    /// The requested stationary density does not normalize.
    #[error("non-normalizable stationary distribution: lambda(1 + rho*lambda) = {coefficient:.6e} <= 0")]
    NonNormalizable { coefficient: f64 },

    /// Generic precondition violation, with a description of the offending input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A minibatch oracle was paired with a model that has no per-example gradients.
    #[error("minibatch oracle requires a model with per-example gradients")]
    MinibatchUnsupported,

    /// Dataset parsing failed.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Two ensembles with mismatched lengths were compared.
    #[error("ensemble length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

impl CoreError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidInput(msg.into())
    }
}
