//! Links between runtimes: direct in-process delivery, and TCP with one
//! u32-length-prefixed frame per envelope.

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, Weak};
use std::thread::{self, JoinHandle};

use log::{debug, warn};

use crate::error::{NodeError, Result};
use crate::node::PeerInfo;
use crate::runtime::{Link, NodeRuntime, Shared};
use crate::wire::NodeId;

/// Frames above this size are treated as a protocol violation.
pub const MAX_FRAME_BYTES: usize = 256 << 20;
const HELLO_MAGIC: &[u8; 4] = b"DHL1";

struct MemoryLink {
    target: Weak<Shared>,
    from: NodeId,
}

impl Link for MemoryLink {
    fn send(&self, frame: &[u8]) -> Result<()> {
        let target = self
            .target
            .upgrade()
            .ok_or_else(|| NodeError::Transport("peer runtime stopped".into()))?;
        target.deliver(frame.to_vec(), self.from);
        Ok(())
    }
}

/// Links two runtimes in-process and runs the signed handshake from `a`.
pub fn connect_in_memory(a: &NodeRuntime, b: &NodeRuntime) -> Result<PeerInfo> {
    a.attach_link(
        b.id(),
        Arc::new(MemoryLink {
            target: Arc::downgrade(b.shared()),
            from: a.id(),
        }),
    );
    b.attach_link(
        a.id(),
        Arc::new(MemoryLink {
            target: Arc::downgrade(a.shared()),
            from: b.id(),
        }),
    );
    a.handshake(b.id()).inspect_err(|_| {
        a.detach_link(b.id());
        b.detach_link(a.id());
    })
}

fn io_err(e: std::io::Error) -> NodeError {
    NodeError::Transport(e.to_string())
}

pub fn write_frame(w: &mut impl Write, frame: &[u8]) -> Result<()> {
    if frame.len() > MAX_FRAME_BYTES {
        return Err(NodeError::Transport(format!("frame of {} bytes too large", frame.len())));
    }
    w.write_all(&(frame.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(frame).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn read_frame(r: &mut impl Read) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(io_err)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(NodeError::Transport(format!("frame of {len} bytes too large")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf)
}

struct TcpLink {
    stream: Mutex<TcpStream>,
}

impl Link for TcpLink {
    fn send(&self, frame: &[u8]) -> Result<()> {
        let mut s = self.stream.lock().unwrap_or_else(|p| p.into_inner());
        write_frame(&mut *s, frame)
    }

    fn close(&self) {
        let s = self.stream.lock().unwrap_or_else(|p| p.into_inner());
        let _ = s.shutdown(Shutdown::Both);
    }
}

/// Link-level hello: each side announces its node id before any signed
/// traffic so inbound frames can be attributed to a link.
fn exchange_hello(stream: &mut TcpStream, me: NodeId) -> Result<NodeId> {
    let mut hello = HELLO_MAGIC.to_vec();
    hello.extend_from_slice(&me.0);
    write_frame(stream, &hello)?;
    let got = read_frame(stream)?;
    if got.len() != 20 || &got[..4] != HELLO_MAGIC {
        return Err(NodeError::Transport("bad hello".into()));
    }
    Ok(NodeId(got[4..].try_into().expect("16 bytes")))
}

fn attach_stream(shared: &Arc<Shared>, me: NodeId, mut stream: TcpStream) -> Result<NodeId> {
    stream.set_nodelay(true).map_err(io_err)?;
    let peer = exchange_hello(&mut stream, me)?;
    let mut reader = stream.try_clone().map_err(io_err)?;
    shared.attach_link(
        peer,
        Arc::new(TcpLink {
            stream: Mutex::new(stream),
        }),
    );
    let target = Arc::downgrade(shared);
    thread::Builder::new()
        .name(format!("tcp-{}", &peer.to_hex()[..8]))
        .spawn(move || loop {
            let frame = match read_frame(&mut reader) {
                Ok(f) => f,
                Err(e) => {
                    debug!("link {peer} closed: {e}");
                    break;
                }
            };
            match target.upgrade() {
                Some(shared) => shared.deliver(frame, peer),
                None => break,
            }
        })
        .map_err(io_err)?;
    Ok(peer)
}

/// Dials `addr`, attaches the link and runs the signed handshake.
pub fn connect_tcp(rt: &NodeRuntime, addr: impl ToSocketAddrs) -> Result<PeerInfo> {
    let stream = TcpStream::connect(addr).map_err(io_err)?;
    let peer = attach_stream(rt.shared(), rt.id(), stream)?;
    rt.handshake(peer).inspect_err(|_| rt.detach_link(peer))
}

/// Accepts connections for a runtime until dropped.
pub struct TcpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl TcpServer {
    /// The runtime must outlive the server.
    pub fn bind(rt: &NodeRuntime, addr: impl ToSocketAddrs) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(io_err)?;
        let addr = listener.local_addr().map_err(io_err)?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let target = Arc::downgrade(rt.shared());
        let me = rt.id();
        let thread = thread::Builder::new()
            .name("tcp-accept".into())
            .spawn(move || {
                for conn in listener.incoming() {
                    if flag.load(Ordering::SeqCst) {
                        break;
                    }
                    match conn {
                        Ok(stream) => {
                            let Some(shared) = target.upgrade() else {
                                break;
                            };
                            if let Err(e) = attach_stream(&shared, me, stream) {
                                warn!("inbound connection rejected: {e}");
                            }
                        }
                        Err(e) => warn!("accept failed: {e}"),
                    }
                }
            })
            .map_err(io_err)?;
        Ok(Self {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for TcpServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransportKind {
    InMemory,
    /// Loopback TCP; the callee listens on an ephemeral port.
    Tcp,
}

impl std::str::FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "in_memory" | "in-memory" | "memory" => Ok(TransportKind::InMemory),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(format!("unknown transport {other:?} (expected in_memory or tcp)")),
        }
    }
}

impl std::fmt::Display for TransportKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransportKind::InMemory => "in_memory",
            TransportKind::Tcp => "tcp",
        })
    }
}

/// Live pairing of two runtimes; keeps the listener alive for TCP.
pub struct Connection {
    pub peer: PeerInfo,
    _server: Option<TcpServer>,
}

/// Connects `a` to `b` and runs the handshake from `a`.
pub fn connect(a: &NodeRuntime, b: &NodeRuntime, kind: TransportKind) -> Result<Connection> {
    match kind {
        TransportKind::InMemory => Ok(Connection {
            peer: connect_in_memory(a, b)?,
            _server: None,
        }),
        TransportKind::Tcp => {
            let server = TcpServer::bind(b, "127.0.0.1:0")?;
            let peer = connect_tcp(a, server.local_addr())?;
            Ok(Connection {
                peer,
                _server: Some(server),
            })
        }
    }
}
