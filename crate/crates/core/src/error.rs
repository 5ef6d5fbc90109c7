//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument or parameter was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature failed to converge within the depth limit.
    /// Carries the best available estimate and its error bound.
    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound}")]
    Quadrature { estimate: f64, error_bound: f64 },

    /// A root or sign-change scan produced a count the model rules out.
    #[error("unexpected root count: expected {expected}, found {found}")]
    RootCount {
        expected: &'static str,
        found: usize,
    },

    /// A numerical procedure failed outside of quadrature.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The exchange rate lies outside the feasible range, so the swap is
    /// never initiated and stage outcomes are undefined.
    #[error("swap not initiated: exchange rate {p_star} is infeasible")]
    NotInitiated { p_star: f64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
