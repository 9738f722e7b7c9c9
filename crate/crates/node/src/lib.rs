//! Nodes that exchange Ed25519-signed messages, keep permissioned object
//! stores, serve allowlisted remote calls and garbage-collect results
//! through refcounted pointers.

pub mod body;
pub mod error;
pub mod message;
pub mod node;
pub mod registry;
pub mod runtime;
pub mod selftest;
pub mod store;
pub mod transport;
pub mod wire;

pub use body::{AccessStatus, ObjectBody};
pub use error::{ErrorCode, NodeError, Result, OPAQUE_ERROR};
pub use message::{MessageKind, Payload, SignedMessage};
pub use node::{Node, Outbound, PeerInfo, PendingRequest, ReceivedDecision, PROTOCOL_VERSION};
pub use registry::{AstRegistry, Kwargs};
pub use runtime::{Direction, LogEntry, NodeRuntime, Pointer};
pub use store::{Policy, StorableObject, Store};
pub use transport::{connect_in_memory, connect_tcp, TcpServer};
pub use wire::{MsgId, NodeId, ObjectId, VerifyKey};
