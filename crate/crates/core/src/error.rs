//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by construction, solving, and verification routines.
#[derive(Debug, Error)]
pub enum CbtError {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested state space exceeds the configured limit.
    #[error("state space too large: {states} states exceeds limit {limit}")]
    Capacity { states: u128, limit: u128 },

    /// An exact integer computation exceeded the integer capacity.
    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    /// The row polynomial has a root with a non-negligible imaginary part.
    #[error("complex root {re} + {im}i (|im| > {tol}); eigenfunction family is not real for these parameters")]
    ComplexRoot { re: f64, im: f64, tol: f64 },

    /// Two roots of the row polynomial coincide; the eigenfunction family degenerates.
    #[error("degenerate roots: |{a} - {b}| < {tol}")]
    DegenerateRoots { a: f64, b: f64, tol: f64 },

    /// A denominator in the row-linking formula vanished.
    #[error("singular link: denominator for row {row}, column {col} vanished")]
    SingularLink { row: usize, col: usize },

    /// A linear system was numerically singular.
    #[error("singular matrix: condition number {cond:.3e} exceeds {limit:.1e}")]
    SingularMatrix { cond: f64, limit: f64 },

    /// Quadrature failed to reach the requested accuracy.
    #[error("quadrature error estimate {estimate:.3e} exceeds tolerance {tol:.1e}")]
    Quadrature { estimate: f64, tol: f64 },
}

impl CbtError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        CbtError::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CbtError>;
