use std::path::PathBuf;

/// Errors raised by the estimation, theory and experiment layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or out-of-range input (non-finite entries, bad shapes, invalid parameters).
    #[error("invalid input: {0}")]
    Input(String),

    /// Input outside the mathematical domain of the operation (e.g. non positive-definite).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed (eigen-solver breakdown, non-finite estimate).
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Repeated eigenvalues, singular iterates, or a missing spectral gap.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("fixed point did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("scale calibration failed: {0}")]
    Calibration(String),

    #[error("phase alignment undefined: reference is orthogonal to the vector")]
    AlignmentUndefined,

    /// Explicit p^2 x p^2 assembly requested above the supported dimension.
    #[error("size guard: explicit assembly limited to p <= {limit}, got p = {p}")]
    SizeGuard { p: usize, limit: usize },

    /// Asymptotic coefficients that do not yield a valid covariance.
    #[error("invalid coefficients: {0}")]
    Coefficient(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("campaign failed: {0}")]
    Campaign(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
