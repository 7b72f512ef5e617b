//! Error type shared by all solver stages.

use thiserror::Error;

/// Everything that can go wrong while building or solving a scattering
/// scenario. Variants are grouped by stage so a caller can distinguish
/// "the input was bad" from "the numerics failed".
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of a function
    /// (negative radius, non-positive wavenumber, unsupported order, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A geometric construction failed (self-intersecting curve, rod
    /// outside its enclosing curve, overlapping scatterers, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A scenario is structurally valid but degenerate (no rods, empty
    /// cluster list, observation grid of zero size, ...).
    #[error("degenerate scenario: {0}")]
    Degenerate(String),

    /// A dense factorization hit a numerically singular matrix.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// An iterative solve ran out of iterations before reaching tolerance.
    #[error(
        "iterative solve did not converge: {iterations} iterations, \
         relative residual {residual:.3e} (target {target:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    /// The inter-cluster coupling iteration is growing instead of
    /// contracting; the reported history holds the last few residuals.
    #[error("coupling iteration diverged; last residuals {history:?}")]
    Divergence { history: Vec<f64> },

    /// A field was requested exactly on a source point where the kernel
    /// is singular.
    #[error("field evaluation at a singular point: {0}")]
    SingularPoint(String),

    /// Configuration inconsistent with the requested computation
    /// (mismatched lengths, invalid tolerances, ...).
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
