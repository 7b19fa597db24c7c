use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("oracle failure: {0}")]
    Oracle(#[from] OracleError),

    #[error("embedding provider failure: {0}")]
    Embedding(String),
}

/// Failure of an edit oracle call. All variants are retriable at the step level.
#[derive(Debug, Clone, Error)]
pub enum OracleError {
    #[error("transport error: {0}")]
    Transport(String),

    #[error("malformed reply: {0}")]
    Malformed(String),
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
