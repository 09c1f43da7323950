use crate::channel::ChannelError;
use crate::nodes::{CommandError, QueueError};

/// Error returned by a node body. Closure and cancellation errors on ports
/// are not failures: the lifecycle treats them as shutdown cues.
#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error("{message}")]
    Body { message: String, retryable: bool },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error("cannot decode item on port {port:?}: {message}")]
    Decode { port: String, message: String },
    #[error("no port {0:?}")]
    UnknownPort(String),
    #[error("parameter {name:?}: {message}")]
    Parameter { name: String, message: String },
}

impl NodeError {
    pub fn fatal(message: impl Into<String>) -> Self {
        NodeError::Body {
            message: message.into(),
            retryable: false,
        }
    }

    pub fn retryable(message: impl Into<String>) -> Self {
        NodeError::Body {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn is_retryable(&self) -> bool {
        match self {
            NodeError::Body { retryable, .. } => *retryable,
            NodeError::Command(e) => e.is_retryable(),
            NodeError::Queue(_) => true,
            NodeError::Channel(e) => matches!(e, ChannelError::StagingFull(_)),
            _ => false,
        }
    }

    /// Port closure or cancellation rather than a genuine failure.
    pub fn is_shutdown_signal(&self) -> bool {
        matches!(self, NodeError::Channel(e) if e.is_shutdown_signal())
    }
}
