//! Threaded host for a [`Node`]: one executor thread processes inbound
//! requests serially, a lock-free-of-the-node router hands replies to
//! waiting callers, and client methods issue requests to peers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, warn};

use crate::body::{
    encode_object_id, AccessRequestBody, AccessStatus, CallBody, CallReply, ErrorBody, GcBody, ObjectBody, PutBody,
    GC_RELEASE, GC_RETAIN,
};
use crate::error::{NodeError, Result};
use crate::message::{MessageKind, SignedMessage};
use crate::node::{Fetch, Node, Outbound, PeerInfo};
use crate::registry::Kwargs;
use crate::wire::{MsgId, NodeId, ObjectId, VerifyKey};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Ordered, reliable byte channel towards one peer.
pub trait Link: Send + Sync {
    fn send(&self, frame: &[u8]) -> Result<()>;
    fn close(&self) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Inbound,
    Outbound,
}

#[derive(Clone, Debug)]
pub struct LogEntry {
    pub direction: Direction,
    pub link: NodeId,
    pub frame: Vec<u8>,
}

enum Inbox {
    Frame(Vec<u8>, NodeId),
    Stop,
}

struct Waiter {
    expect: Option<VerifyKey>,
    tx: Sender<SignedMessage>,
}

pub(crate) struct Shared {
    id: NodeId,
    key: VerifyKey,
    name: String,
    node: Mutex<Node>,
    links: Mutex<HashMap<NodeId, Arc<dyn Link>>>,
    waiters: Mutex<HashMap<MsgId, Waiter>>,
    inbox: Mutex<Sender<Inbox>>,
    log: Mutex<Vec<LogEntry>>,
    timeout: Duration,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Shared {
    pub(crate) fn attach_link(&self, peer: NodeId, link: Arc<dyn Link>) {
        lock(&self.links).insert(peer, link);
        lock(&self.node).add_link(peer);
    }

    pub(crate) fn detach_link(&self, peer: NodeId) {
        if let Some(l) = lock(&self.links).remove(&peer) {
            l.close();
        }
        lock(&self.node).remove_link(peer);
    }

    fn record(&self, direction: Direction, link: NodeId, frame: &[u8]) {
        lock(&self.log).push(LogEntry {
            direction,
            link,
            frame: frame.to_vec(),
        });
    }

    /// Entry point for every frame arriving from `from`. Never takes the
    /// node lock, so replies reach callers blocked inside `process`.
    pub(crate) fn deliver(&self, frame: Vec<u8>, from: NodeId) {
        self.record(Direction::Inbound, from, &frame);
        if let Some((correlation, msg)) = self.as_awaited_reply(&frame) {
            let mut waiters = lock(&self.waiters);
            let matches = waiters
                .get(&correlation)
                .is_some_and(|w| w.expect.map_or(true, |k| k == msg.sender_key) && msg.verify());
            if matches {
                let w = waiters.remove(&correlation).expect("present");
                let _ = w.tx.send(msg);
                return;
            }
        }
        let _ = lock(&self.inbox).send(Inbox::Frame(frame, from));
    }

    fn as_awaited_reply(&self, frame: &[u8]) -> Option<(MsgId, SignedMessage)> {
        let msg = SignedMessage::decode(frame).ok()?;
        if msg.destination != self.id {
            return None;
        }
        let p = msg.parsed_payload().ok()?;
        p.reply.then_some((p.correlation, msg))
    }

    fn send_on(&self, link: NodeId, frame: &[u8]) -> Result<()> {
        let l = lock(&self.links)
            .get(&link)
            .cloned()
            .ok_or_else(|| NodeError::UnknownDestination(link.to_hex()))?;
        self.record(Direction::Outbound, link, frame);
        l.send(frame)
    }

    fn send_all(&self, out: Vec<Outbound>) {
        for o in out {
            if let Err(e) = self.send_on(o.link, &o.frame) {
                warn!("{}: dropping frame for {}: {e}", self.name, o.link);
            }
        }
    }

    fn roundtrip(&self, link: NodeId, frame: &[u8], msg_id: MsgId, expect: Option<VerifyKey>) -> Result<SignedMessage> {
        let (tx, rx) = mpsc::channel();
        lock(&self.waiters).insert(msg_id, Waiter { expect, tx });
        if let Err(e) = self.send_on(link, frame) {
            lock(&self.waiters).remove(&msg_id);
            return Err(e);
        }
        match rx.recv_timeout(self.timeout) {
            Ok(m) => Ok(m),
            Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => {
                lock(&self.waiters).remove(&msg_id);
                Err(NodeError::Timeout(self.timeout.as_millis() as u64))
            }
        }
    }
}

struct RuntimeFetch<'a>(&'a Shared);

impl Fetch for RuntimeFetch<'_> {
    fn exchange(&mut self, link: NodeId, frame: Vec<u8>, msg_id: MsgId, expect: VerifyKey) -> Result<SignedMessage> {
        self.0.roundtrip(link, &frame, msg_id, Some(expect))
    }
}

/// Client-side proxy for an object held by some node.
#[derive(Debug)]
pub struct Pointer {
    pub object_id: ObjectId,
    pub location: NodeId,
    pub type_tag: String,
    alive: AtomicBool,
}

impl Pointer {
    pub fn new(object_id: ObjectId, location: NodeId, type_tag: &str) -> Self {
        Self {
            object_id,
            location,
            type_tag: type_tag.to_string(),
            alive: AtomicBool::new(true),
        }
    }

    pub fn is_alive(&self) -> bool {
        self.alive.load(Ordering::SeqCst)
    }

    fn check_alive(&self) -> Result<()> {
        if self.is_alive() {
            Ok(())
        } else {
            Err(NodeError::Released)
        }
    }
}

pub struct NodeRuntime {
    shared: Arc<Shared>,
    executor: Option<JoinHandle<()>>,
}

impl NodeRuntime {
    pub fn spawn(node: Node) -> Self {
        Self::spawn_with_timeout(node, DEFAULT_TIMEOUT)
    }

    pub fn spawn_with_timeout(node: Node, timeout: Duration) -> Self {
        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            id: node.id(),
            key: node.key(),
            name: node.name().to_string(),
            node: Mutex::new(node),
            links: Mutex::new(HashMap::new()),
            waiters: Mutex::new(HashMap::new()),
            inbox: Mutex::new(tx),
            log: Mutex::new(Vec::new()),
            timeout,
        });
        let worker = Arc::clone(&shared);
        let executor = thread::Builder::new()
            .name(format!("node-{}", shared.name))
            .spawn(move || {
                while let Ok(Inbox::Frame(frame, from)) = rx.recv() {
                    let out = lock(&worker.node).process(&frame, Some(from), &mut RuntimeFetch(&worker));
                    worker.send_all(out);
                }
            })
            .expect("spawn executor");
        Self {
            shared,
            executor: Some(executor),
        }
    }

    pub(crate) fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    pub fn id(&self) -> NodeId {
        self.shared.id
    }

    pub fn key(&self) -> VerifyKey {
        self.shared.key
    }

    pub fn name(&self) -> &str {
        &self.shared.name
    }

    /// Runs `f` with exclusive access to the node state.
    pub fn with_node<R>(&self, f: impl FnOnce(&mut Node) -> R) -> R {
        f(&mut lock(&self.shared.node))
    }

    pub fn attach_link(&self, peer: NodeId, link: Arc<dyn Link>) {
        self.shared.attach_link(peer, link);
    }

    pub fn detach_link(&self, peer: NodeId) {
        self.shared.detach_link(peer);
    }

    /// Hands a raw frame to this node as if it arrived on `from`.
    pub fn deliver(&self, frame: Vec<u8>, from: NodeId) {
        self.shared.deliver(frame, from);
    }

    pub fn message_log(&self) -> Vec<LogEntry> {
        lock(&self.shared.log).clone()
    }

    pub fn clear_log(&self) {
        lock(&self.shared.log).clear();
    }

    /// Exchanges signed handshakes over an attached link.
    pub fn handshake(&self, peer: NodeId) -> Result<PeerInfo> {
        let (msg, link) = self.with_node(|n| {
            let link = n.link_for(peer);
            let body = n.handshake_body().encode();
            (n.build_request(peer, MessageKind::Handshake, body), link)
        });
        let link = link.ok_or_else(|| NodeError::UnknownDestination(peer.to_hex()))?;
        let reply = self.shared.roundtrip(link, &msg.encode(), msg.msg_id, None)?;
        self.with_node(|n| n.accept_handshake_reply(&reply))
    }

    fn request(&self, dest: NodeId, kind: MessageKind, body: Vec<u8>) -> Result<Vec<u8>> {
        let (msg, link, expect) = self.with_node(|n| {
            let link = n.link_for(dest);
            let expect = n.peer(dest).map(|p| p.key);
            (n.build_request(dest, kind, body), link, expect)
        });
        let link = link.ok_or_else(|| NodeError::UnknownDestination(dest.to_hex()))?;
        let expect = expect.ok_or_else(|| NodeError::UnknownDestination(format!("{dest} has not handshaken")))?;
        let reply = self.shared.roundtrip(link, &msg.encode(), msg.msg_id, Some(expect))?;
        let payload = reply.parsed_payload()?;
        match reply.kind {
            k if k == kind => Ok(payload.body),
            MessageKind::ErrorReply => Err(ErrorBody::decode(&payload.body)?.into_error()),
            k => Err(NodeError::Codec(format!("{k:?} reply to {kind:?}"))),
        }
    }

    pub fn put(&self, dest: NodeId, payload: Vec<u8>, type_tag: &str, description: &str) -> Result<Pointer> {
        let object_id = self.with_node(|n| n.fresh_object_id());
        let body = PutBody {
            object_id,
            type_tag: type_tag.to_string(),
            description: description.to_string(),
            payload,
        };
        self.request(dest, MessageKind::StorePut, body.encode())?;
        Ok(Pointer::new(object_id, dest, type_tag))
    }

    pub fn get(&self, dest: NodeId, id: ObjectId) -> Result<ObjectBody> {
        ObjectBody::decode(&self.request(dest, MessageKind::StoreGet, encode_object_id(&id))?)
    }

    pub fn delete(&self, dest: NodeId, id: ObjectId) -> Result<()> {
        self.request(dest, MessageKind::StoreDelete, encode_object_id(&id))
            .map(drop)
    }

    pub fn request_access(&self, dest: NodeId, id: ObjectId, reason: &str) -> Result<AccessStatus> {
        let body = AccessRequestBody {
            object_id: id,
            reason: reason.to_string(),
        };
        AccessStatus::decode(&self.request(dest, MessageKind::AccessRequest, body.encode())?)
    }

    /// Calls `path` on `dest`; the result stays there behind the returned
    /// pointer.
    pub fn remote_call(&self, dest: NodeId, path: &str, args: &[&Pointer], kwargs: &Kwargs) -> Result<Pointer> {
        for a in args {
            a.check_alive()?;
        }
        let (result_id, expected) = self.with_node(|n| {
            let expected = n
                .peer(dest)
                .and_then(|p| p.export(path))
                .map(|s| s.return_tag.clone());
            (n.fresh_object_id(), expected)
        });
        let body = CallBody {
            path: path.to_string(),
            result_id,
            args: args.iter().map(|p| (p.location, p.object_id)).collect(),
            kwargs: kwargs.clone(),
        };
        let reply = CallReply::decode(&self.request(dest, MessageKind::RemoteCall, body.encode())?)?;
        if reply.result_id != result_id || expected.as_ref().is_some_and(|t| *t != reply.return_tag) {
            return Err(NodeError::Codec(format!("call reply for {path} does not match the request")));
        }
        Ok(Pointer::new(result_id, dest, &reply.return_tag))
    }

    pub fn resolve(&self, p: &Pointer) -> Result<Vec<u8>> {
        p.check_alive()?;
        Ok(self.get(p.location, p.object_id)?.payload)
    }

    fn gc(&self, p: &Pointer, op: u8) -> Result<u64> {
        let body = GcBody {
            object_id: p.object_id,
            op,
        };
        let r = self.request(p.location, MessageKind::GcRelease, body.encode())?;
        let count: [u8; 8] = r
            .try_into()
            .map_err(|_| NodeError::Codec("bad gc reply".into()))?;
        Ok(u64::from_le_bytes(count))
    }

    /// Second pointer to the same object; bumps the remote refcount.
    pub fn clone_pointer(&self, p: &Pointer) -> Result<Pointer> {
        p.check_alive()?;
        self.gc(p, GC_RETAIN)?;
        Ok(Pointer::new(p.object_id, p.location, &p.type_tag))
    }

    /// Releases the pointer's reference. Returns false, without sending
    /// anything, when this pointer was already dropped.
    pub fn drop_pointer(&self, p: &Pointer) -> Result<bool> {
        if !p.alive.swap(false, Ordering::SeqCst) {
            debug!("{}: suppressed second release of {}", self.name(), p.object_id);
            return Ok(false);
        }
        self.gc(p, GC_RELEASE)?;
        Ok(true)
    }

    pub fn approve(&self, request: u64) -> Result<()> {
        let out = self.with_node(|n| n.approve(request))?;
        self.shared.send_all(out);
        Ok(())
    }

    pub fn deny(&self, request: u64) -> Result<()> {
        let out = self.with_node(|n| n.deny(request))?;
        self.shared.send_all(out);
        Ok(())
    }

    /// Stops the executor and closes every link.
    pub fn shutdown(&mut self) {
        let _ = lock(&self.shared.inbox).send(Inbox::Stop);
        if let Some(h) = self.executor.take() {
            let _ = h.join();
        }
        let links: Vec<_> = lock(&self.shared.links).drain().map(|(_, l)| l).collect();
        for l in links {
            l.close();
        }
    }
}

impl Drop for NodeRuntime {
    fn drop(&mut self) {
        self.shutdown();
    }
}
