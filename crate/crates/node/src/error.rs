use thiserror::Error;

/// Text of every error a node does not choose to explain.
pub const OPAQUE_ERROR: &str = "UnknownPrivateException";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NodeError {
    #[error("codec error: {0}")]
    Codec(String),
    #[error("signature verification failed")]
    Signature,
    #[error("protocol version mismatch: local {local}, remote {remote}")]
    Version { local: u16, remote: u16 },
    #[error("remote error ({code:?}): {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no reply within {0} ms")]
    Timeout(u64),
    #[error("unknown destination {0}")]
    UnknownDestination(String),
    #[error("pointer already released")]
    Released,
    #[error("{0}")]
    Local(String),
}

/// Error classes carried by error replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    /// Details withheld.
    Opaque,
    NotFound,
    Version,
    /// A service opted in to exposing its error text.
    Exposed,
    Unreachable,
}

impl ErrorCode {
    pub fn to_u8(self) -> u8 {
        match self {
            ErrorCode::Opaque => 0,
            ErrorCode::NotFound => 1,
            ErrorCode::Version => 2,
            ErrorCode::Exposed => 3,
            ErrorCode::Unreachable => 4,
        }
    }

    pub fn from_u8(v: u8) -> Self {
        match v {
            1 => ErrorCode::NotFound,
            2 => ErrorCode::Version,
            3 => ErrorCode::Exposed,
            4 => ErrorCode::Unreachable,
            _ => ErrorCode::Opaque,
        }
    }
}

impl NodeError {
    pub fn is_opaque(&self) -> bool {
        matches!(self, NodeError::Remote { code: ErrorCode::Opaque, .. })
    }

    pub fn is_not_found(&self) -> bool {
        matches!(self, NodeError::Remote { code: ErrorCode::NotFound, .. })
    }
}

pub type Result<T> = std::result::Result<T, NodeError>;
