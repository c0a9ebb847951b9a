use thiserror::Error;

/// Errors raised by the numerical kernels and the file formats.
#[derive(Debug, Error)]
pub enum EscatError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The linear system is too ill-conditioned to trust, usually because the
    /// frequency sits close to an interior Dirichlet eigenvalue or a layer resonance.
    #[error("resonance: {context} (condition estimate {condition:.3e}); perturb omega by ~1e-6 relative and retry")]
    Resonance { context: String, condition: f64 },

    #[error("reconstruction failed: {0}")]
    Reconstruction(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EscatError>;
