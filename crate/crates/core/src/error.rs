use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("potential is not differentiable at r = {r}")]
    NonDifferentiable { r: f64 },

    #[error("shape violation: {reason} (radii: {radii:?})")]
    ShapeViolation { reason: String, radii: Vec<f64> },

    #[error("quadrature did not converge on [{a}, {b}]: error estimate {estimate:e} > {tol:e}")]
    Quadrature { a: f64, b: f64, estimate: f64, tol: f64 },

    #[error("supremum search inconclusive: {0}")]
    SearchInconclusive(String),

    #[error("parameter search exhausted: {0}")]
    SearchExhausted(String),

    #[error("particles {i} and {j} collapsed (distance {distance:e})")]
    CoincidentParticles { i: usize, j: usize, distance: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
