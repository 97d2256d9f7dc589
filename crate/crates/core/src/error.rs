use alloc::string::String;

/// Errors produced by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("index {index} out of bounds for {len} rows")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("segment {0} has no rows")]
    EmptySegment(usize),
    #[error("backward root must be scalar, got {0} elements")]
    NonScalarRoot(usize),
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error("k = {k} exceeds the {available} candidate points")]
    KTooLarge { k: usize, available: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parameter {name}: expected shape {expected:?}, got {got:?}")]
    ParameterShape {
        name: String,
        expected: alloc::vec::Vec<usize>,
        got: alloc::vec::Vec<usize>,
    },
    #[error("missing parameter {0}")]
    MissingParameter(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
