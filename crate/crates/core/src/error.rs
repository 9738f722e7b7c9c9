use duetlite_ckks::CkksError;
use duetlite_node::NodeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DuetError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("weights codec error: {0}")]
    Codec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot split there: {0}")]
    Split(String),

    #[error("protocol failure during {step}: {source}")]
    Protocol {
        step: &'static str,
        #[source]
        source: NodeError,
    },

    #[error("homomorphic evaluation failed during {step}: {source}")]
    He {
        step: &'static str,
        #[source]
        source: CkksError,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DuetError {
    /// 1 for anything the caller can fix by changing inputs, 2 for failures
    /// of the protocol or of the encrypted computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            DuetError::Protocol { .. } | DuetError::He { .. } => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        DuetError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, DuetError>;

/// Tags a node error with the flow step it interrupted.
pub(crate) fn protocol(step: &'static str) -> impl FnOnce(NodeError) -> DuetError {
    move |source| DuetError::Protocol { step, source }
}

/// Tags a ckks error with the flow step it interrupted.
pub(crate) fn he(step: &'static str) -> impl FnOnce(CkksError) -> DuetError {
    move |source| DuetError::He { step, source }
}
