use thiserror::Error;

use crate::orchestrator::RetrievalResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("rate limited by upstream (HTTP 429) after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },

    #[error("upstream returned HTTP {status} after {attempts} attempt(s): {message}")]
    Http {
        status: u16,
        attempts: u32,
        message: String,
    },

    #[error("malformed response: field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("xml error for pmid {pmid}: {message}")]
    Xml { pmid: String, message: String },

    #[error("cannot decode figure {figure_index} of pmid {pmid}: {message}")]
    ImageDecode {
        pmid: String,
        figure_index: usize,
        message: String,
    },

    #[error("unsupported image format `{0}` (expected PNG, JPEG, TIFF or GIF)")]
    UnsupportedImageFormat(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("bad index file: expected magic {expected:?}, found {found:?}")]
    Format { expected: String, found: String },

    #[error("unsupported index format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("template error: {0}")]
    Template(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// The generation backend failed after retrieval succeeded. The retrieval
    /// is kept so callers can fall back to an extractive answer.
    #[error("generation backend failed: {message}")]
    Generation {
        message: String,
        retrieval: Box<RetrievalResult>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Whether repeating the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            Error::Transport { .. } | Error::RateLimited { .. } => true,
            Error::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}
