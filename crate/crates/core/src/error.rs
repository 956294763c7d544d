use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Explicit heat stencil would be unstable.
    #[error("stability invariant violated: dt/dx^2 = {ratio} exceeds 1/2")]
    Stability { ratio: f64 },

    #[error("non-finite value produced at step {step}, cell {cell}{}", path_suffix(*.path))]
    BlowUp { path: Option<u64>, step: usize, cell: usize },

    /// The mollifier at scale `m` does not span two grid cells.
    #[error("grid too coarse for mollifier scale m = {m:.4e} (m*dx = {ratio:.3} > 1/2); largest admissible level is {max_level:?}")]
    GridTooCoarse { m: f64, ratio: f64, max_level: Option<u32> },

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {intervals} intervals")]
    Quadrature { estimate: f64, error: f64, intervals: usize },

    #[error("insufficient data: {found} admissible pairs, need at least {needed}")]
    InsufficientData { found: usize, needed: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    /// Resolution requirement of a scale (2^-N, sqrt(a_n), ...) is not met by the grid.
    #[error("resolution violated: {0}")]
    Resolution(String),
}

fn path_suffix(path: Option<u64>) -> String {
    match path {
        Some(p) => alloc::format!(" (path {p})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn with_path(self, path: u64) -> Self {
        match self {
            Error::BlowUp { step, cell, .. } => Error::BlowUp { path: Some(path), step, cell },
            other => other,
        }
    }
}
