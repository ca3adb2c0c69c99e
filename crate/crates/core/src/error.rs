use thiserror::Error;

/// Errors shared by the toolkit.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Construction of a domain value failed (bad amplitude, weights, points, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A precondition of an operation was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The adaptive quadrature could not certify the requested tolerance
    /// within its refinement budget.
    #[error("quadrature did not converge: error estimate {error:.3e} exceeds tolerance {tolerance:.3e} after {subdivisions} subdivisions")]
    QuadratureNonConvergence {
        error: f64,
        tolerance: f64,
        subdivisions: usize,
    },

    /// KL or chi-squared found `p > 0` where `q` vanishes (divergence is +inf).
    #[error("support violation: p(x) = {p:.3e} where q(x) = {q:.3e} at x = {x}")]
    SupportViolation { x: f64, p: f64, q: f64 },

    /// An iteration budget was exhausted before reaching the requested tolerance.
    #[error("iteration budget exceeded in {stage}: {detail}")]
    BudgetExceeded { stage: &'static str, detail: String },

    /// Backtracking line search could not find an ascent step.
    #[error("line search failed: {0}")]
    LineSearchFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
