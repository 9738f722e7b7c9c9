//! Protocol state machine of one node.
//!
//! `Node::process` consumes one inbound frame and returns the frames to
//! send. It never blocks except through the caller-supplied [`Fetch`],
//! which remote calls use to read arguments held by other nodes.
//! Threading and transports live in `runtime`.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;

use ed25519_dalek::SigningKey;
use log::{debug, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::body::{
    decode_object_id, AccessDecision, AccessRequestBody, AccessStatus, CallBody, CallReply, ErrorBody, GcBody,
    HandshakeBody, ObjectBody, PutBody, GC_RETAIN,
};
use crate::error::{ErrorCode, NodeError, Result, OPAQUE_ERROR};
use crate::message::{MessageKind, Payload, SignedMessage};
use crate::registry::{AstRegistry, PathSignature};
use crate::store::{Policy, StorableObject, Store};
use crate::wire::{MsgId, NodeId, ObjectId, VerifyKey};

pub const PROTOCOL_VERSION: u16 = 1;
/// Message ids remembered per sender for replay suppression.
pub const REPLAY_WINDOW: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerInfo {
    pub node_id: NodeId,
    pub key: VerifyKey,
    pub name: String,
    pub role: String,
    pub exports: Vec<PathSignature>,
}

impl PeerInfo {
    pub fn export(&self, path: &str) -> Option<&PathSignature> {
        self.exports.iter().find(|e| e.path == path)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingRequest {
    pub id: u64,
    pub object_id: ObjectId,
    pub requester: VerifyKey,
    pub requester_node: NodeId,
    pub type_tag: String,
    pub reason: String,
}

/// Decision received from another node's owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceivedDecision {
    pub owner: NodeId,
    pub object_id: ObjectId,
    pub approved: bool,
}

/// A frame to hand to the link towards `link`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outbound {
    pub link: NodeId,
    pub frame: Vec<u8>,
}

/// Blocking request/reply used while a message is being processed.
pub trait Fetch {
    /// Sends `frame` towards `link` and returns the reply correlated with
    /// `msg_id`, already verified as signed by `expect`.
    fn exchange(&mut self, link: NodeId, frame: Vec<u8>, msg_id: MsgId, expect: VerifyKey) -> Result<SignedMessage>;
}

/// Fetch for contexts without a network.
pub struct NoFetch;

impl Fetch for NoFetch {
    fn exchange(&mut self, _: NodeId, _: Vec<u8>, _: MsgId, _: VerifyKey) -> Result<SignedMessage> {
        Err(NodeError::Transport("no network attached".into()))
    }
}

#[derive(Debug, Default)]
struct ReplayWindow {
    order: VecDeque<MsgId>,
    ids: HashSet<MsgId>,
}

impl ReplayWindow {
    /// False when `id` was already seen.
    fn admit(&mut self, id: MsgId) -> bool {
        if !self.ids.insert(id) {
            return false;
        }
        self.order.push_back(id);
        if self.order.len() > REPLAY_WINDOW {
            let old = self.order.pop_front().expect("non-empty");
            self.ids.remove(&old);
        }
        true
    }
}

struct Failure {
    code: ErrorCode,
    message: String,
}

impl Failure {
    fn opaque() -> Self {
        Self {
            code: ErrorCode::Opaque,
            message: OPAQUE_ERROR.to_string(),
        }
    }

    fn not_found(id: &ObjectId) -> Self {
        Self {
            code: ErrorCode::NotFound,
            message: format!("object {id} not found"),
        }
    }
}

type Served = std::result::Result<(MessageKind, Vec<u8>), Failure>;

pub struct Node {
    name: String,
    role: String,
    version: u16,
    id: NodeId,
    signing: SigningKey,
    key: VerifyKey,
    rng: ChaCha20Rng,
    store: Store,
    registry: AstRegistry,
    policy: Policy,
    peers: BTreeMap<VerifyKey, PeerInfo>,
    links: BTreeSet<NodeId>,
    routes: BTreeMap<NodeId, NodeId>,
    seen: BTreeMap<VerifyKey, ReplayWindow>,
    pending: BTreeMap<u64, PendingRequest>,
    next_request: u64,
    decisions: Vec<ReceivedDecision>,
}

impl Node {
    /// Keys and ids are derived from `seed`.
    pub fn new(name: &str, role: &str, seed: u64) -> Self {
        Self::with_store(name, role, seed, Store::in_memory())
    }

    pub fn with_store(name: &str, role: &str, seed: u64, store: Store) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut sk = [0u8; 32];
        rng.fill_bytes(&mut sk);
        let signing = SigningKey::from_bytes(&sk);
        let mut id = [0u8; 16];
        rng.fill_bytes(&mut id);
        Self {
            name: name.to_string(),
            role: role.to_string(),
            version: PROTOCOL_VERSION,
            id: NodeId(id),
            key: VerifyKey(signing.verifying_key().to_bytes()),
            signing,
            rng,
            store,
            registry: AstRegistry::new(),
            policy: Policy::Manual,
            peers: BTreeMap::new(),
            links: BTreeSet::new(),
            routes: BTreeMap::new(),
            seen: BTreeMap::new(),
            pending: BTreeMap::new(),
            next_request: 1,
            decisions: Vec::new(),
        }
    }

    /// Overrides the advertised protocol version.
    pub fn set_protocol_version(&mut self, v: u16) {
        self.version = v;
    }

    pub fn protocol_version(&self) -> u16 {
        self.version
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn key(&self) -> VerifyKey {
        self.key
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn registry(&self) -> &AstRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut AstRegistry {
        &mut self.registry
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn set_policy(&mut self, policy: Policy) {
        self.policy = policy;
    }

    pub fn peers(&self) -> impl Iterator<Item = &PeerInfo> {
        self.peers.values()
    }

    pub fn peer(&self, node: NodeId) -> Option<&PeerInfo> {
        self.peers.values().find(|p| p.node_id == node)
    }

    pub fn add_link(&mut self, peer: NodeId) {
        self.links.insert(peer);
    }

    pub fn remove_link(&mut self, peer: NodeId) {
        self.links.remove(&peer);
        self.routes.retain(|_, via| *via != peer);
    }

    /// Sends traffic for `dest` through the direct link `via`.
    pub fn add_route(&mut self, dest: NodeId, via: NodeId) {
        self.routes.insert(dest, via);
    }

    pub fn link_for(&self, dest: NodeId) -> Option<NodeId> {
        if self.links.contains(&dest) {
            return Some(dest);
        }
        self.routes.get(&dest).copied().filter(|via| self.links.contains(via))
    }

    pub fn pending_requests(&self) -> Vec<PendingRequest> {
        self.pending.values().cloned().collect()
    }

    pub fn decisions(&self) -> &[ReceivedDecision] {
        &self.decisions
    }

    pub fn fresh_object_id(&mut self) -> ObjectId {
        let mut b = [0u8; 16];
        self.rng.fill_bytes(&mut b);
        ObjectId(b)
    }

    fn fresh_msg_id(&mut self) -> MsgId {
        let mut b = [0u8; 16];
        self.rng.fill_bytes(&mut b);
        MsgId(b)
    }

    /// Signs a request originating here.
    pub fn build_request(&mut self, dest: NodeId, kind: MessageKind, body: Vec<u8>) -> SignedMessage {
        let payload = Payload {
            reply: false,
            correlation: MsgId::default(),
            origin: self.id,
            body,
        };
        let msg_id = self.fresh_msg_id();
        SignedMessage::sign(&self.signing, msg_id, dest, kind, payload.encode())
    }

    pub fn handshake_body(&self) -> HandshakeBody {
        HandshakeBody {
            version: self.version,
            node_id: self.id,
            name: self.name.clone(),
            role: self.role.clone(),
            exports: self.registry.exports(),
        }
    }

    /// Records the peer described by a handshake reply.
    pub fn accept_handshake_reply(&mut self, reply: &SignedMessage) -> Result<PeerInfo> {
        if !reply.verify() {
            return Err(NodeError::Signature);
        }
        let payload = reply.parsed_payload()?;
        if reply.kind == MessageKind::ErrorReply {
            return Err(ErrorBody::decode(&payload.body)?.into_error());
        }
        if reply.kind != MessageKind::Handshake {
            return Err(NodeError::Codec(format!("unexpected {:?} reply to handshake", reply.kind)));
        }
        let remote = HandshakeBody::peek_version(&payload.body)?;
        if remote != self.version {
            return Err(NodeError::Version {
                local: self.version,
                remote,
            });
        }
        let body = HandshakeBody::decode(&payload.body)?;
        self.record_peer(reply.sender_key, payload.origin, body)
            .map_err(|f| NodeError::Remote {
                code: f.code,
                message: f.message,
            })
    }

    fn record_peer(&mut self, key: VerifyKey, origin: NodeId, body: HandshakeBody) -> std::result::Result<PeerInfo, Failure> {
        if body.node_id != origin || body.role.trim().is_empty() {
            return Err(Failure {
                code: ErrorCode::Exposed,
                message: "handshake must name its origin and assert a role".into(),
            });
        }
        let info = PeerInfo {
            node_id: body.node_id,
            key,
            name: body.name,
            role: body.role,
            exports: body.exports,
        };
        debug!("{}: peer {} ({}) as {}", self.name, info.name, info.node_id, info.role);
        self.peers.retain(|_, p| p.node_id != info.node_id);
        self.peers.insert(key, info.clone());
        Ok(info)
    }

    fn can_read(&self, obj: &StorableObject, key: &VerifyKey) -> bool {
        *key == self.key || obj.read_permissions.contains(key)
    }

    fn is_known(&self, key: &VerifyKey) -> bool {
        *key == self.key || self.peers.contains_key(key)
    }

    /// Local owner write; `readers` get read permission.
    pub fn put_local(&mut self, payload: Vec<u8>, type_tag: &str, description: &str, readers: &[VerifyKey]) -> Result<ObjectId> {
        let id = self.fresh_object_id();
        let mut obj = StorableObject::new(id, payload, type_tag, description);
        obj.read_permissions.extend(readers.iter().copied());
        self.store.insert(obj)?;
        Ok(id)
    }

    pub fn get_local(&self, id: &ObjectId) -> Option<&StorableObject> {
        self.store.get(id)
    }

    pub fn delete_local(&mut self, id: &ObjectId) -> Result<bool> {
        Ok(self.store.remove(id)?.is_some())
    }

    pub fn grant(&mut self, id: &ObjectId, key: VerifyKey) -> Result<()> {
        self.store
            .update(id, |o| {
                o.read_permissions.insert(key);
            })?
            .ok_or_else(|| NodeError::Local(format!("object {id} not found")))
    }

    pub fn approve(&mut self, request: u64) -> Result<Vec<Outbound>> {
        self.decide(request, true)
    }

    pub fn deny(&mut self, request: u64) -> Result<Vec<Outbound>> {
        self.decide(request, false)
    }

    fn decide(&mut self, request: u64, approved: bool) -> Result<Vec<Outbound>> {
        let req = self
            .pending
            .remove(&request)
            .ok_or_else(|| NodeError::Local(format!("no pending request {request}")))?;
        if approved {
            self.grant(&req.object_id, req.requester)?;
        }
        let body = AccessDecision {
            object_id: req.object_id,
            approved,
        }
        .encode();
        let msg = self.build_request(req.requester_node, MessageKind::AccessReply, body);
        Ok(self
            .link_for(req.requester_node)
            .map(|link| Outbound {
                link,
                frame: msg.encode(),
            })
            .into_iter()
            .collect())
    }

    fn record_pending(&mut self, obj_id: ObjectId, tag: &str, requester: VerifyKey, node: NodeId, reason: &str) -> u64 {
        if let Some(p) = self
            .pending
            .values()
            .find(|p| p.object_id == obj_id && p.requester == requester)
        {
            return p.id;
        }
        let id = self.next_request;
        self.next_request += 1;
        self.pending.insert(
            id,
            PendingRequest {
                id,
                object_id: obj_id,
                requester,
                requester_node: node,
                type_tag: tag.to_string(),
                reason: reason.to_string(),
            },
        );
        id
    }

    /// Deterministic dump of all protocol state, for equality checks.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut s = String::new();
        let objects: Vec<_> = self.store.objects().collect();
        let _ = write!(
            s,
            "{objects:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{}|{:?}|{:?}",
            self.policy, self.peers, self.links, self.routes, self.pending, self.next_request, self.decisions, self.version
        );
        for (k, w) in &self.seen {
            let _ = write!(s, "|{k:?}:{:?}", w.order);
        }
        s.into_bytes()
    }

    /// Handles one inbound frame that arrived on `from` (None when
    /// injected locally).
    pub fn process(&mut self, frame: &[u8], from: Option<NodeId>, fetch: &mut dyn Fetch) -> Vec<Outbound> {
        let msg = match SignedMessage::decode(frame) {
            Ok(m) => m,
            Err(e) => {
                debug!("{}: dropping undecodable frame: {e}", self.name);
                return Vec::new();
            }
        };
        if !msg.verify() {
            warn!("{}: signature check failed for {}", self.name, msg.msg_id);
            let Some(link) = from else {
                return Vec::new();
            };
            return self.error_to(link, link, msg.msg_id, Failure::opaque());
        }
        if !self.seen.entry(msg.sender_key).or_default().admit(msg.msg_id) {
            debug!("{}: duplicate {}", self.name, msg.msg_id);
            return Vec::new();
        }
        let payload = match msg.parsed_payload() {
            Ok(p) => p,
            Err(_) => {
                let Some(link) = from else {
                    return Vec::new();
                };
                return self.error_to(link, link, msg.msg_id, Failure::opaque());
            }
        };

        if msg.destination != self.id {
            return match self.link_for(msg.destination).filter(|l| Some(*l) != from) {
                Some(link) => vec![Outbound {
                    link,
                    frame: frame.to_vec(),
                }],
                None if payload.reply => Vec::new(),
                None => self.reply(
                    &msg,
                    &payload,
                    from,
                    Err(Failure {
                        code: ErrorCode::Unreachable,
                        message: format!("no route to {}", msg.destination),
                    }),
                ),
            };
        }
        if payload.reply {
            // Replies with a waiter never reach the state machine.
            return Vec::new();
        }

        let served = if msg.kind == MessageKind::Handshake {
            self.serve_handshake(&msg, &payload)
        } else if !self.is_known(&msg.sender_key) {
            Err(Failure::opaque())
        } else {
            match msg.kind {
                MessageKind::StorePut => self.serve_put(&msg, &payload),
                MessageKind::StoreGet => self.serve_get(&msg, &payload),
                MessageKind::StoreDelete => self.serve_delete(&msg, &payload),
                MessageKind::RemoteCall => self.serve_call(&msg, &payload, fetch),
                MessageKind::AccessRequest => self.serve_access_request(&msg, &payload),
                MessageKind::GcRelease => self.serve_gc(&msg, &payload),
                MessageKind::AccessReply => {
                    if let Ok(d) = AccessDecision::decode(&payload.body) {
                        self.decisions.push(ReceivedDecision {
                            owner: payload.origin,
                            object_id: d.object_id,
                            approved: d.approved,
                        });
                    }
                    return Vec::new();
                }
                _ => Err(Failure::opaque()),
            }
        };
        self.reply(&msg, &payload, from, served)
    }

    fn reply(&mut self, req: &SignedMessage, payload: &Payload, from: Option<NodeId>, served: Served) -> Vec<Outbound> {
        let (kind, body) = match served {
            Ok(kb) => kb,
            Err(f) => (
                MessageKind::ErrorReply,
                ErrorBody {
                    code: f.code,
                    message: f.message,
                }
                .encode(),
            ),
        };
        let Some(link) = self.link_for(payload.origin).or(from) else {
            return Vec::new();
        };
        self.signed_reply(link, payload.origin, req.msg_id, kind, body)
    }

    fn error_to(&mut self, link: NodeId, dest: NodeId, correlation: MsgId, f: Failure) -> Vec<Outbound> {
        let body = ErrorBody {
            code: f.code,
            message: f.message,
        }
        .encode();
        self.signed_reply(link, dest, correlation, MessageKind::ErrorReply, body)
    }

    fn signed_reply(&mut self, link: NodeId, dest: NodeId, correlation: MsgId, kind: MessageKind, body: Vec<u8>) -> Vec<Outbound> {
        let payload = Payload {
            reply: true,
            correlation,
            origin: self.id,
            body,
        };
        let msg_id = self.fresh_msg_id();
        let msg = SignedMessage::sign(&self.signing, msg_id, dest, kind, payload.encode());
        vec![Outbound {
            link,
            frame: msg.encode(),
        }]
    }

    fn serve_handshake(&mut self, msg: &SignedMessage, payload: &Payload) -> Served {
        let remote = HandshakeBody::peek_version(&payload.body).map_err(|_| Failure::opaque())?;
        if remote != self.version {
            return Err(Failure {
                code: ErrorCode::Version,
                message: format!("protocol version {remote} refused; this node speaks {}", self.version),
            });
        }
        let body = HandshakeBody::decode(&payload.body).map_err(|_| Failure::opaque())?;
        self.record_peer(msg.sender_key, payload.origin, body)?;
        Ok((MessageKind::Handshake, self.handshake_body().encode()))
    }

    fn serve_put(&mut self, msg: &SignedMessage, payload: &Payload) -> Served {
        let put = PutBody::decode(&payload.body).map_err(|_| Failure::opaque())?;
        if self.store.contains(&put.object_id) && msg.sender_key != self.key {
            return Err(Failure::opaque());
        }
        let mut obj = StorableObject::new(put.object_id, put.payload, &put.type_tag, &put.description);
        if msg.sender_key != self.key {
            obj.read_permissions.insert(msg.sender_key);
        }
        self.store.insert(obj).map_err(|_| Failure::opaque())?;
        Ok((MessageKind::StorePut, Vec::new()))
    }

    fn serve_get(&mut self, msg: &SignedMessage, payload: &Payload) -> Served {
        let id = decode_object_id(&payload.body).map_err(|_| Failure::opaque())?;
        let Some(obj) = self.store.get(&id) else {
            return Err(Failure::not_found(&id));
        };
        let tag = obj.type_tag.clone();
        if !self.can_read(obj, &msg.sender_key) {
            if !self.policy.approves(&tag) {
                self.record_pending(id, &tag, msg.sender_key, payload.origin, "read attempt");
                return Err(Failure::opaque());
            }
            self.grant(&id, msg.sender_key).map_err(|_| Failure::opaque())?;
        }
        let obj = self.store.get(&id).expect("present");
        let body = ObjectBody {
            type_tag: obj.type_tag.clone(),
            description: obj.description.clone(),
            payload: obj.payload.clone(),
        };
        Ok((MessageKind::StoreGet, body.encode()))
    }

    fn serve_delete(&mut self, msg: &SignedMessage, payload: &Payload) -> Served {
        let id = decode_object_id(&payload.body).map_err(|_| Failure::opaque())?;
        if msg.sender_key != self.key {
            return Err(Failure::opaque());
        }
        match self.store.remove(&id) {
            Ok(Some(_)) => Ok((MessageKind::StoreDelete, Vec::new())),
            Ok(None) => Err(Failure::not_found(&id)),
            Err(_) => Err(Failure::opaque()),
        }
    }

    fn serve_access_request(&mut self, msg: &SignedMessage, payload: &Payload) -> Served {
        let req = AccessRequestBody::decode(&payload.body).map_err(|_| Failure::opaque())?;
        let Some(obj) = self.store.get(&req.object_id) else {
            return Err(Failure::not_found(&req.object_id));
        };
        let tag = obj.type_tag.clone();
        let status = if self.can_read(obj, &msg.sender_key) {
            AccessStatus::Approved
        } else if self.policy.approves(&tag) {
            self.grant(&req.object_id, msg.sender_key).map_err(|_| Failure::opaque())?;
            AccessStatus::Approved
        } else {
            AccessStatus::Pending(self.record_pending(req.object_id, &tag, msg.sender_key, payload.origin, &req.reason))
        };
        Ok((MessageKind::AccessRequest, status.encode()))
    }

    fn serve_gc(&mut self, msg: &SignedMessage, payload: &Payload) -> Served {
        let gc = GcBody::decode(&payload.body).map_err(|_| Failure::opaque())?;
        let Some(obj) = self.store.get(&gc.object_id) else {
            return Err(Failure::not_found(&gc.object_id));
        };
        if !self.can_read(obj, &msg.sender_key) {
            return Err(Failure::opaque());
        }
        let count = if gc.op == GC_RETAIN {
            obj.refcount + 1
        } else {
            obj.refcount.saturating_sub(1)
        };
        let stored = if count == 0 {
            self.store.remove(&gc.object_id).map(|_| ())
        } else {
            self.store.update(&gc.object_id, |o| o.refcount = count).map(|_| ())
        };
        stored.map_err(|_| Failure::opaque())?;
        Ok((MessageKind::GcRelease, count.to_le_bytes().to_vec()))
    }

    fn serve_call(&mut self, msg: &SignedMessage, payload: &Payload, fetch: &mut dyn Fetch) -> Served {
        let call = CallBody::decode(&payload.body).map_err(|_| Failure::opaque())?;
        let Some(handler) = self.registry.lookup(&call.path).cloned() else {
            debug!("{}: unregistered path {:?}", self.name, call.path);
            return Err(Failure::opaque());
        };
        if call.args.len() != handler.signature.arg_tags.len() || self.store.contains(&call.result_id) {
            return Err(Failure::opaque());
        }
        let mut inputs = Vec::with_capacity(call.args.len());
        for ((loc, id), want) in call.args.iter().zip(&handler.signature.arg_tags) {
            let (tag, bytes) = if *loc == self.id {
                let obj = self.store.get(id).ok_or_else(Failure::opaque)?;
                if !self.can_read(obj, &msg.sender_key) {
                    return Err(Failure::opaque());
                }
                (obj.type_tag.clone(), obj.payload.clone())
            } else {
                let got = self.fetch_remote(*loc, *id, fetch).map_err(|e| {
                    debug!("{}: argument fetch failed: {e}", self.name);
                    Failure::opaque()
                })?;
                (got.type_tag, got.payload)
            };
            if tag != *want {
                return Err(Failure::opaque());
            }
            inputs.push(bytes);
        }
        let out = (handler.func)(&inputs, &call.kwargs).map_err(|e| {
            if handler.expose_errors {
                Failure {
                    code: ErrorCode::Exposed,
                    message: e,
                }
            } else {
                debug!("{}: handler {} failed: {e}", self.name, call.path);
                Failure::opaque()
            }
        })?;
        let return_tag = handler.signature.return_tag.clone();
        let mut obj = StorableObject::new(call.result_id, out, &return_tag, &format!("result of {}", call.path));
        if msg.sender_key != self.key {
            obj.read_permissions.insert(msg.sender_key);
        }
        self.store.insert(obj).map_err(|_| Failure::opaque())?;
        let reply = CallReply {
            result_id: call.result_id,
            return_tag,
        };
        Ok((MessageKind::RemoteCall, reply.encode()))
    }

    fn fetch_remote(&mut self, loc: NodeId, id: ObjectId, fetch: &mut dyn Fetch) -> Result<ObjectBody> {
        let key = self
            .peer(loc)
            .map(|p| p.key)
            .ok_or_else(|| NodeError::UnknownDestination(loc.to_hex()))?;
        let link = self
            .link_for(loc)
            .ok_or_else(|| NodeError::UnknownDestination(loc.to_hex()))?;
        let req = self.build_request(loc, MessageKind::StoreGet, id.0.to_vec());
        let reply = fetch.exchange(link, req.encode(), req.msg_id, key)?;
        let body = reply.parsed_payload()?.body;
        match reply.kind {
            MessageKind::StoreGet => ObjectBody::decode(&body),
            MessageKind::ErrorReply => Err(ErrorBody::decode(&body)?.into_error()),
            k => Err(NodeError::Codec(format!("unexpected {k:?} reply"))),
        }
    }
}
