use thiserror::Error;

/// Errors from corpus ingestion, linear algebra, training, and model ops.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("kronecker product of {rows}x{cols} exceeds the capacity cap of {cap} entries")]
    CapacityExceeded { rows: usize, cols: usize, cap: usize },
    #[error("singular or rank-deficient input")]
    SingularInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index out of range: {index} >= {bound} ({what})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("zero vector where a nonzero vector is required")]
    ZeroVector,
    #[error("unknown token at byte {position}: {found:?}")]
    UnknownToken { position: usize, found: String },
    #[error("unbalanced parentheses")]
    UnbalancedParens,
    #[error("zero count is not a valid multiplicity")]
    ZeroCount,
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error on line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("corpus contains no co-occurring pairs")]
    NoPairs,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite or diverging loss: {0}")]
    NonFiniteLoss(String),
    #[error("morphism matching does not cover head {0}")]
    UnmatchedHead(usize),
    #[error("morphism head counts differ: source has {src}, target has {tgt}")]
    HeadCountMismatch { src: usize, tgt: usize },
    #[error("matrix is not orthogonal (residual {residual:e})")]
    NotOrthogonal { residual: f64 },
    #[error("threshold {0} is outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("model file has bad magic bytes")]
    BadMagic,
    #[error("model file payload is truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("no ground-truth target for token {0:?}")]
    MissingTruth(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
