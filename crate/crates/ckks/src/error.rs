use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CkksError {
    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("vector of length {len} exceeds the {slots} available slots")]
    Capacity { len: usize, slots: usize },

    #[error("invalid ciphertext state: {0}")]
    State(String),

    #[error("operands are at different levels ({left} vs {right})")]
    LevelMismatch { left: usize, right: usize },

    #[error("operand scales differ beyond tolerance ({left} vs {right})")]
    ScaleMismatch { left: f64, right: f64 },

    #[error("missing key material: {0}")]
    MissingKey(String),

    #[error("multiplicative depth exhausted")]
    DepthExhausted,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value overflows the encoding range: {0}")]
    Overflow(String),

    #[error("codec error: {0}")]
    Codec(String),
}

pub type Result<T> = std::result::Result<T, CkksError>;
