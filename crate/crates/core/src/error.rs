use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid configuration for {key}: {reason}")]
    Config { key: String, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("degenerate pilot: |X_p| = {modulus:e} at pilot index {index}")]
    DegeneratePilot { index: usize, modulus: f64 },

    #[error("numerical failure in {op}: {detail}")]
    Numerical { op: &'static str, detail: String },

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("{what}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("{what}: unsupported format version {found} (expected {expected})")]
    BadVersion {
        what: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("{what}: file truncated ({detail})")]
    Truncated { what: &'static str, detail: String },

    #[error("{what}: malformed content ({detail})")]
    Malformed { what: &'static str, detail: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("missing file {path}: {hint}")]
    MissingFile { path: String, hint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
