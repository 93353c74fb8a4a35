use thiserror::Error;

/// Errors raised across the solver and the lab.
#[derive(Debug, Error)]
pub enum Kp5Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Array or grid dimensions that do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// A dyadic scale or time outside the resolvable range.
    #[error("range error: {0}")]
    Range(String),
    /// A field that violates the spectral constraints.
    #[error("constraint violation: {0}")]
    Constraint(String),
    /// Quadrature or root finding failed to reach tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Picard differences stopped contracting.
    #[error("divergence: {0}")]
    Divergence(String),
    /// Iteration budget exhausted before the stopping rule fired.
    #[error("non-convergence: {0}")]
    NonConvergence(String),
    /// A post-condition that the theory guarantees failed numerically.
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Kp5Error>;
