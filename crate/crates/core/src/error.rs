//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad magic: expected CFT1, found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    BadVersion(u8),

    #[error("unknown dtype code {0}")]
    BadDtype(u8),

    #[error("invalid rank {0}: expected 1 to 5 dims")]
    BadRank(usize),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("non-finite scalar at flat index {0}")]
    NonFinite(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimensionality {0} not supported: score volumes are 3D or 5D")]
    Dimensionality(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("path invalid: {0}")]
    InvalidPath(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("identical classes: c_pos and c_neg are both {0}")]
    IdenticalClasses(usize),

    #[error("no attributes: sample attribute set is empty")]
    NoAttributes,

    #[error("no negatives: at least two classes are required")]
    NoNegatives,

    #[error("untrained classifier")]
    Untrained,

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown name: {0}")]
    UnknownName(String),
}
