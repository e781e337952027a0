use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("buffer of length {len} does not match {width}x{height}")]
    BadLength { width: usize, height: usize, len: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(&'static str),
    #[error("{scales} gradient scales need at least {needed_w}x{needed_h} pixels, map is {width}x{height}")]
    TooSmallForScales {
        scales: usize,
        width: usize,
        height: usize,
        needed_w: usize,
        needed_h: usize,
    },
    #[error("zero feature vector at position {0}")]
    ZeroVector(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate camera: {0}")]
    DegenerateCamera(&'static str),
    #[error("model `{model}` has no usable value at pixel ({x}, {y})")]
    InvalidPixel { model: String, x: u32, y: u32 },
    #[error("no prediction for image `{0}`")]
    MissingPrediction(String),
    #[error("pair `{0}` is unlabeled")]
    UnlabeledPair(String),
    #[error("expected at least {needed} models, got {got}")]
    NotEnoughModels { needed: usize, got: usize },
    #[error("invalid pair `{pair_id}`: {reason}")]
    InvalidPair { pair_id: String, reason: &'static str },
}
