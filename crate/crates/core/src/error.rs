use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the supported domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iteration failed to reach its tolerance.
    #[error("{context}: no convergence after {iterations} iterations")]
    NonConvergence {
        context: &'static str,
        iterations: usize,
    },

    /// A result exceeds the double range.
    #[error("overflow: {0}")]
    Overflow(String),

    /// Doubling the quadrature order changed the result beyond tolerance.
    #[error("quadrature not converged: {0}")]
    QuadratureNotConverged(String),

    /// The second moment does not have a repeated eigenvalue pair.
    #[error("not uniaxial: eigenvalue multiplicity gap {gap:.3e} exceeds tolerance")]
    NotUniaxial { gap: f64 },

    /// Malformed, corrupted or incompatible table file.
    #[error("table error: {0}")]
    Table(String),

    /// Malformed input data (batch files, flags).
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
