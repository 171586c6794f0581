use std::path::PathBuf;

/// Errors produced by the solver, its diagnostics and its IO layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("domain error: {0}")]
    Domain(String),

    /// The kernel/interface-parameter pair violates the positivity condition
    /// `eps^2 (J*1) - 1 > 0`.
    #[error("model validity error: gamma0 = eps^2 (J*1) - 1 = {gamma0} must be positive")]
    ModelValidity { gamma0: f64 },

    #[error("numerical divergence at t = {t}: max|phi| = {linf}")]
    Divergence { t: f64, linf: f64 },

    #[error("{path}: {key}: {msg}")]
    Parse { path: String, key: String, msg: String },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Divergence errors map to exit code 2 in the CLI, everything else to 1.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
