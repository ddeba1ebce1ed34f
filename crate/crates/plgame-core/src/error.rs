//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by kernel constants, quadrature, the solver, the extremal
/// operators and the game simulator.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Kernel exponent outside the supported range `(1, 64]`, or a monomial
    /// exponent `<= -1` that makes the ball integral diverge.
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    /// Dimension other than 2 or 3 where a cross-section or direction rule is
    /// required.
    #[error("unsupported dimension {0} (only N = 2 and N = 3 are implemented)")]
    UnsupportedDimension(usize),

    /// A point (or one of the lattice nodes needed to interpolate around it)
    /// falls outside the covered region of a grid field.
    #[error("point {0:?} is outside the covered region")]
    OutOfDomain(Vec<f64>),

    /// Invalid problem or rule parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Value iteration hit `max_iter` before reaching the tolerance.
    #[error("not converged after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    /// Two runs that must share the same problem definition do not.
    #[error("mismatched problems: {0}")]
    MismatchedProblems(String),

    /// Extremal-inequality verification requested for p > 2, where the
    /// measure decomposition behind the inequalities fails.
    #[error("exponent p = {0} out of range: the extremal inequalities require 1 < p <= 2 (the kernel density vanishes orthogonally to z for p > 2)")]
    ExponentOutOfRange(f64),

    /// The decomposition density is 0/0 at p = 2 (gamma = 1/2).
    #[error("degenerate decomposition at p = 2: 2*gamma - 1 = 0")]
    DegenerateDecomposition,

    /// A harness check that needs a nonvanishing gradient was called where
    /// |grad u| < 1e-10.
    #[error("degenerate gradient at {0:?}")]
    DegenerateGradient(Vec<f64>),

    /// The kernel step sampler exceeded its rejection cap.
    #[error("kernel step sampler stalled after {0} proposals")]
    SamplerStall(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
