use thiserror::Error;

/// Errors raised by mesh construction, discretization and solves.
#[derive(Debug, Error)]
pub enum HelmError {
    /// Connectivity violates the matching-mesh assumption.
    #[error("structural error: {0}")]
    Structural(String),
    /// Boundary or region labelling is incomplete or inconsistent.
    #[error("specification error: {0}")]
    Specification(String),
    /// Degenerate or inverted geometry.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Invalid argument supplied by the caller.
    #[error("input error: {0}")]
    Input(String),
    /// Request beyond what is implemented (e.g. quadrature order).
    #[error("capability error: {0}")]
    Capability(String),
    /// Linear system is singular or too ill-conditioned to trust.
    #[error("near-singular system (condition estimate {condition:.3e}): {context}")]
    NearSingular { condition: f64, context: String },
    /// Other numerical failure (factorization, eigensolver, convergence).
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, HelmError>;
