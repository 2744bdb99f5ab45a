use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the geometry, objective and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e} exceeds 1e-8)")]
    Asymmetric { asymmetry: f64 },

    #[error("matrix has a non-finite entry")]
    NonFinite,

    #[error(
        "matrix is not positive definite (min eigenvalue {min_eigenvalue:.6e}, max eigenvalue {max_eigenvalue:.6e})"
    )]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("tangent vectors are attached to different base points")]
    BaseMismatch,

    #[error("numeric failure in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("input matrices do not commute (relative commutator {commutator:.3e})")]
    NonCommuting { commutator: f64 },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),
}

impl Error {
    pub(crate) fn numeric(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numeric {
            op,
            detail: detail.into(),
        }
    }
}
