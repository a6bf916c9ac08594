use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("pixel {pixel}: channel sum {sum} is not within 1e-4 of 1")]
    NotNormalized { pixel: usize, sum: f64 },

    #[error("pixel {pixel}, channel {channel}: value {value} outside [0, 1]")]
    OutOfRange { pixel: usize, channel: usize, value: f64 },

    #[error("invalid class id {0}")]
    InvalidClass(usize),

    #[error("class {0} is not assigned to any group")]
    UngroupedClass(usize),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input")]
    EmptyInput,

    #[error("gaussian sigma must be non-negative, got {0}")]
    NegativeSigma(f64),

    #[error("node {0} has no outgoing edges")]
    IsolatedNode(usize),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("layer chain is empty")]
    EmptyChain,

    #[error("channel mismatch at layer {layer}: expected {expected} input channels, found {found}")]
    ChannelMismatch { layer: usize, expected: usize, found: usize },

    #[error("input {height}x{width} is not divisible by {divisor}")]
    IndivisibleInput { height: usize, width: usize, divisor: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub(crate) fn shape_mismatch(expected: impl core::fmt::Display, found: impl core::fmt::Display) -> Error {
    use alloc::format;
    Error::ShapeMismatch { expected: format!("{expected}"), found: format!("{found}") }
}
