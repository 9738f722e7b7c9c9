//! Protocol property suites. Each returns a one-line summary on success
//! and the first violated expectation on failure.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use ed25519_dalek::SigningKey;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::body::{
    encode_object_id, AccessRequestBody, AccessStatus, CallBody, ErrorBody, GcBody, ObjectBody, PutBody, GC_RELEASE,
};
use crate::error::{ErrorCode, NodeError, OPAQUE_ERROR};
use crate::message::{MessageKind, SignedMessage};
use crate::node::{NoFetch, Node};
use crate::registry::Kwargs;
use crate::runtime::{NodeRuntime, Pointer};
use crate::store::Policy;
use crate::transport::{connect, TransportKind};
use crate::wire::{NodeId, ObjectId, VerifyKey};

pub type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(ctx: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{ctx}: {e}")
}

/// Reply as seen by a requester.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reply {
    Ok(MessageKind, Vec<u8>),
    Err(ErrorCode, String),
    Silent,
}

/// An owner node plus handshaken peers, driven synchronously.
pub struct Bench {
    pub owner: Node,
    pub peers: Vec<Node>,
}

impl Bench {
    pub fn new(peers: usize, seed: u64) -> Self {
        let mut owner = Node::new("owner", "data_owner", seed.wrapping_mul(31).wrapping_add(1));
        let mut list = Vec::with_capacity(peers);
        for i in 0..peers {
            let mut p = Node::new(&format!("peer{i}"), "data_scientist", seed.wrapping_mul(31).wrapping_add(2 + i as u64));
            owner.add_link(p.id());
            p.add_link(owner.id());
            let hs = p.build_request(owner.id(), MessageKind::Handshake, p.handshake_body().encode());
            let out = owner.process(&hs.encode(), Some(p.id()), &mut NoFetch);
            let reply = SignedMessage::decode(&out[0].frame).expect("handshake reply");
            p.accept_handshake_reply(&reply).expect("handshake accepted");
            list.push(p);
        }
        Self { owner, peers: list }
    }

    pub fn frame(&mut self, peer: usize, kind: MessageKind, body: Vec<u8>) -> Vec<u8> {
        let dest = self.owner.id();
        self.peers[peer].build_request(dest, kind, body).encode()
    }

    pub fn deliver(&mut self, peer: usize, frame: &[u8]) -> Reply {
        let from = self.peers[peer].id();
        let out = self.owner.process(frame, Some(from), &mut NoFetch);
        let Some(first) = out.first() else {
            return Reply::Silent;
        };
        let msg = SignedMessage::decode(&first.frame).expect("node emits decodable frames");
        assert!(msg.verify(), "node emits verifiable frames");
        let body = msg.parsed_payload().expect("payload").body;
        if msg.kind == MessageKind::ErrorReply {
            let e = ErrorBody::decode(&body).expect("error body");
            Reply::Err(e.code, e.message)
        } else {
            Reply::Ok(msg.kind, body)
        }
    }

    pub fn send(&mut self, peer: usize, kind: MessageKind, body: Vec<u8>) -> Reply {
        let f = self.frame(peer, kind, body);
        self.deliver(peer, &f)
    }
}

fn is_opaque_reply(r: &Reply) -> bool {
    matches!(r, Reply::Err(ErrorCode::Opaque, m) if m == OPAQUE_ERROR)
}

fn is_opaque(e: &NodeError) -> bool {
    matches!(e, NodeError::Remote { code: ErrorCode::Opaque, message } if message == OPAQUE_ERROR)
}

fn mutate(base: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
    loop {
        let mut m = base.to_vec();
        match rng.gen_range(0..6) {
            0 => {
                let i = rng.gen_range(0..m.len());
                m[i] ^= 1 << rng.gen_range(0..8);
            }
            1 => {
                let i = rng.gen_range(0..m.len());
                m[i] = rng.gen();
            }
            2 => m.truncate(rng.gen_range(0..m.len())),
            3 => {
                let i = rng.gen_range(0..=m.len());
                m.insert(i, rng.gen());
            }
            4 => {
                m.remove(rng.gen_range(0..m.len()));
            }
            _ => {
                for _ in 0..rng.gen_range(2..8) {
                    let i = rng.gen_range(0..m.len());
                    m[i] ^= 1 << rng.gen_range(0..8);
                }
            }
        }
        if m != base {
            return m;
        }
    }
}

/// Every mutation of a valid message leaves the receiver's state intact
/// and draws at most an opaque error.
pub fn tamper_fuzz(mutations: usize, seed: u64) -> Check {
    let mut b = Bench::new(1, seed);
    b.owner
        .registry_mut()
        .register("bench.echo", &["bytes"], "bytes", false, |a, _| Ok(a[0].clone()))
        .map_err(fail("register"))?;
    let k = b.peers[0].key();
    let ids: Vec<ObjectId> = (0..4u8)
        .map(|i| {
            let tag = if i % 2 == 0 { "bytes" } else { "weights" };
            b.owner.put_local(vec![i; 8], tag, "fuzz seed", &[k]).expect("put")
        })
        .collect();
    let mut frames = Vec::new();
    for i in 0..64usize {
        let id = ids[i % ids.len()];
        let (kind, body) = match i % 8 {
            0 => (
                MessageKind::StorePut,
                PutBody {
                    object_id: b.peers[0].fresh_object_id(),
                    type_tag: "bytes".into(),
                    description: "fuzz".into(),
                    payload: vec![i as u8; 12],
                }
                .encode(),
            ),
            1 => (MessageKind::StoreGet, encode_object_id(&id)),
            2 => (MessageKind::StoreDelete, encode_object_id(&id)),
            3 => (
                MessageKind::RemoteCall,
                CallBody {
                    path: "bench.echo".into(),
                    result_id: b.peers[0].fresh_object_id(),
                    args: vec![(b.owner.id(), ids[0])],
                    kwargs: Kwargs::new(),
                }
                .encode(),
            ),
            4 => (
                MessageKind::AccessRequest,
                AccessRequestBody {
                    object_id: id,
                    reason: "fuzz".into(),
                }
                .encode(),
            ),
            5 => (MessageKind::GcRelease, GcBody { object_id: id, op: GC_RELEASE }.encode()),
            6 => (MessageKind::Handshake, b.peers[0].handshake_body().encode()),
            _ => (MessageKind::Unknown(42), vec![1, 2, 3]),
        };
        frames.push(b.frame(0, kind, body));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x7a3f);
    let mut rejections = 0usize;
    for n in 0..mutations {
        let base = &frames[rng.gen_range(0..frames.len())];
        let m = mutate(base, &mut rng);
        let before = b.owner.snapshot();
        let reply = b.deliver(0, &m);
        ensure(b.owner.snapshot() == before, || format!("mutation {n} changed node state"))?;
        match reply {
            Reply::Silent => {}
            r if is_opaque_reply(&r) => rejections += 1,
            r => return Err(format!("mutation {n} drew a non-opaque reply {r:?}")),
        }
    }

    // Control: the untampered frames do change state.
    let mut changed = 0usize;
    for f in &frames {
        let before = b.owner.snapshot();
        b.deliver(0, f);
        changed += usize::from(b.owner.snapshot() != before);
    }
    ensure(changed == frames.len(), || {
        format!("only {changed} of {} valid frames were accepted", frames.len())
    })?;
    Ok(format!(
        "{mutations} mutations: 0 state changes, {rejections} opaque rejections; all {} originals accepted",
        frames.len()
    ))
}

/// A signature by one key presented under another key never verifies and
/// never mutates state.
pub fn forgery_trials(trials: usize, seed: u64) -> Check {
    let mut b = Bench::new(1, seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xf0f0);
    let victim = b.peers[0].key();
    for t in 0..trials {
        let mut sk = [0u8; 32];
        rng.fill_bytes(&mut sk);
        let forger = SigningKey::from_bytes(&sk);
        let mut msg_id = [0u8; 16];
        rng.fill_bytes(&mut msg_id);
        let body = PutBody {
            object_id: ObjectId(msg_id),
            type_tag: "bytes".into(),
            description: "forged".into(),
            payload: vec![t as u8; 4],
        };
        let payload = crate::message::Payload {
            reply: false,
            correlation: Default::default(),
            origin: b.peers[0].id(),
            body: body.encode(),
        };
        let mut m = SignedMessage::sign(&forger, crate::wire::MsgId(msg_id), b.owner.id(), MessageKind::StorePut, payload.encode());
        ensure(m.verify(), || "honest signature rejected".into())?;
        m.sender_key = victim;
        ensure(!m.verify(), || format!("trial {t}: forged signature verified"))?;
        let before = b.owner.snapshot();
        let r = b.deliver(0, &m.encode());
        ensure(is_opaque_reply(&r), || format!("trial {t}: forged message drew {r:?}"))?;
        ensure(b.owner.snapshot() == before, || format!("trial {t}: forged message changed state"))?;
    }
    Ok(format!("{trials} cross-key forgeries rejected"))
}

/// Replayed message ids have no effect and draw no reply.
pub fn duplicate_suppression(seed: u64) -> Check {
    let mut b = Bench::new(1, seed);
    let object_id = b.peers[0].fresh_object_id();
    let put = b.frame(
        0,
        MessageKind::StorePut,
        PutBody {
            object_id,
            type_tag: "bytes".into(),
            description: "dup".into(),
            payload: vec![9; 4],
        }
        .encode(),
    );
    ensure(matches!(b.deliver(0, &put), Reply::Ok(..)), || "first put failed".into())?;
    let before = b.owner.snapshot();
    ensure(b.deliver(0, &put) == Reply::Silent, || "replayed put drew a reply".into())?;
    ensure(b.owner.snapshot() == before, || "replayed put changed state".into())?;

    let retain = b.frame(0, MessageKind::GcRelease, GcBody { object_id, op: crate::body::GC_RETAIN }.encode());
    b.deliver(0, &retain);
    let release = b.frame(0, MessageKind::GcRelease, GcBody { object_id, op: GC_RELEASE }.encode());
    for _ in 0..3 {
        b.deliver(0, &release);
    }
    let count = b.owner.get_local(&object_id).map(|o| o.refcount);
    ensure(count == Some(1), || format!("replayed release left refcount {count:?}, expected 1"))?;
    Ok("replayed put and gc_release ignored".into())
}

/// Randomized request/approve/deny/get interleavings: a read succeeds
/// exactly when the owner or its policy granted that key earlier.
pub fn authorization_traces(traces: usize, ops: usize, seed: u64) -> Check {
    let mut reads = 0usize;
    let mut blocked = 0usize;
    for t in 0..traces {
        let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let mut b = Bench::new(3, seed.wrapping_add(1000 + t as u64));
        let tags = ["ciphertext", "weights", "ciphertext", "weights"];
        let ids: Vec<ObjectId> = tags
            .iter()
            .enumerate()
            .map(|(i, tag)| b.owner.put_local(vec![i as u8; 6], tag, "trace", &[]).expect("put"))
            .collect();
        let keys: Vec<VerifyKey> = b.peers.iter().map(|p| p.key()).collect();
        let mut granted: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut auto = false;
        for step in 0..ops {
            let p = rng.gen_range(0..keys.len());
            let o = rng.gen_range(0..ids.len());
            let by_policy = auto && tags[o] == "ciphertext";
            match rng.gen_range(0..6) {
                0..=1 => {
                    if by_policy {
                        granted.insert((o, p));
                    }
                    match b.send(p, MessageKind::StoreGet, encode_object_id(&ids[o])) {
                        Reply::Ok(_, body) => {
                            ensure(granted.contains(&(o, p)), || format!("trace {t} step {step}: ungranted read"))?;
                            let ob = ObjectBody::decode(&body).map_err(fail("get body"))?;
                            ensure(ob.payload == vec![o as u8; 6], || "wrong payload".into())?;
                            reads += 1;
                        }
                        r if is_opaque_reply(&r) => {
                            ensure(!granted.contains(&(o, p)), || format!("trace {t} step {step}: granted read refused"))?;
                            blocked += 1;
                        }
                        r => return Err(format!("trace {t} step {step}: unexpected {r:?}")),
                    }
                }
                2 => {
                    let body = AccessRequestBody {
                        object_id: ids[o],
                        reason: "trace".into(),
                    };
                    let r = b.send(p, MessageKind::AccessRequest, body.encode());
                    let Reply::Ok(_, body) = r else {
                        return Err(format!("trace {t} step {step}: request failed {r:?}"));
                    };
                    match AccessStatus::decode(&body).map_err(fail("status"))? {
                        AccessStatus::Approved => {
                            ensure(by_policy || granted.contains(&(o, p)), || {
                                format!("trace {t} step {step}: approval without a grant")
                            })?;
                            granted.insert((o, p));
                        }
                        AccessStatus::Pending(_) => {
                            ensure(!by_policy && !granted.contains(&(o, p)), || {
                                format!("trace {t} step {step}: granted key left pending")
                            })?;
                        }
                    }
                }
                3..=4 => {
                    let pending = b.owner.pending_requests();
                    if pending.is_empty() {
                        continue;
                    }
                    let req = &pending[rng.gen_range(0..pending.len())];
                    let oi = ids.iter().position(|x| *x == req.object_id).expect("known object");
                    let pi = keys.iter().position(|k| *k == req.requester).expect("known key");
                    if rng.gen_bool(0.5) {
                        b.owner.approve(req.id).map_err(fail("approve"))?;
                        granted.insert((oi, pi));
                    } else {
                        b.owner.deny(req.id).map_err(fail("deny"))?;
                    }
                }
                _ => {
                    auto = !auto;
                    b.owner.set_policy(if auto {
                        Policy::auto_approve(["ciphertext"])
                    } else {
                        Policy::Manual
                    });
                }
            }
        }
    }
    Ok(format!("{traces} traces: {reads} granted reads, {blocked} refused, no violation"))
}

fn wait_until(deadline: Duration, mut f: impl FnMut() -> bool) -> bool {
    let start = Instant::now();
    while start.elapsed() < deadline {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    f()
}

fn pair(kind: TransportKind, seed: u64) -> std::result::Result<(NodeRuntime, NodeRuntime, crate::transport::Connection), String> {
    let owner = NodeRuntime::spawn(Node::new("owner", "data_owner", seed));
    let ds = NodeRuntime::spawn(Node::new("scientist", "data_scientist", seed + 1));
    let conn = connect(&ds, &owner, kind).map_err(fail("connect"))?;
    Ok((owner, ds, conn))
}

/// Deny-before-approve, manual approval, tag policy and root-only delete.
pub fn permission_matrix(kind: TransportKind) -> Check {
    let (owner, ds, _conn) = pair(kind, 40)?;
    let ks = ds.key();
    let (w1, w2, c1) = owner.with_node(|n| {
        (
            n.put_local(b"weights-1".to_vec(), "weights", "conv", &[]).unwrap(),
            n.put_local(b"weights-2".to_vec(), "weights", "fc", &[]).unwrap(),
            n.put_local(b"ciphertext-1".to_vec(), "ciphertext", "act", &[]).unwrap(),
        )
    });
    let oid = owner.id();

    let e = ds.get(oid, w1).expect_err("read before approval");
    ensure(is_opaque(&e), || format!("unapproved read gave {e}"))?;
    let pending = owner.with_node(|n| n.pending_requests());
    let req = pending
        .iter()
        .find(|p| p.object_id == w1 && p.requester == ks)
        .ok_or("unauthorized read left no pending request")?;
    owner.deny(req.id).map_err(fail("deny"))?;
    let e = ds.get(oid, w1).expect_err("read after deny");
    ensure(is_opaque(&e), || format!("denied read gave {e}"))?;
    ensure(
        wait_until(Duration::from_secs(5), || {
            ds.with_node(|n| n.decisions().iter().any(|d| d.object_id == w1 && !d.approved))
        }),
        || "deny notification not received".into(),
    )?;

    let status = ds.request_access(oid, w1, "need conv weights").map_err(fail("request"))?;
    let AccessStatus::Pending(id) = status else {
        return Err("manual policy approved a request".into());
    };
    owner.approve(id).map_err(fail("approve"))?;
    let got = ds.get(oid, w1).map_err(fail("read after approve"))?;
    ensure(got.payload == b"weights-1", || "approved read returned wrong bytes".into())?;

    owner.with_node(|n| n.set_policy(Policy::auto_approve(["ciphertext"])));
    let got = ds.get(oid, c1).map_err(fail("policy read"))?;
    ensure(got.payload == b"ciphertext-1", || "policy read returned wrong bytes".into())?;
    let e = ds.get(oid, w2).expect_err("weights blocked under ciphertext policy");
    ensure(is_opaque(&e), || format!("policy-blocked read gave {e}"))?;

    let e = ds.delete(oid, c1).expect_err("non-root delete");
    ensure(is_opaque(&e), || format!("non-root delete gave {e}"))?;
    owner.with_node(|n| n.delete_local(&c1)).map_err(fail("root delete"))?;
    let e = ds.get(oid, c1).expect_err("read after delete");
    ensure(e.is_not_found(), || format!("read after delete gave {e}"))?;

    let e = ds
        .remote_call(oid, "os.system", &[], &Kwargs::new())
        .expect_err("unregistered path");
    ensure(is_opaque(&e), || format!("unregistered path gave {e}"))?;
    Ok(format!("permission matrix holds over {kind}"))
}

/// Random pointer lifecycles: the object lives exactly while some pointer
/// does, and a pointer releases at most once.
pub fn gc_traces(traces: usize, seed: u64) -> Check {
    let (owner, ds, _conn) = pair(TransportKind::InMemory, 60)?;
    let oid = owner.id();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut suppressed = 0usize;
    for t in 0..traces {
        let first = ds
            .put(oid, vec![t as u8; 16], "bytes", "gc trace")
            .map_err(fail("put"))?;
        let id = first.object_id;
        let mut ptrs = vec![first];
        for step in 0..rng.gen_range(1..24) {
            let live: Vec<usize> = (0..ptrs.len()).filter(|&i| ptrs[i].is_alive()).collect();
            if live.is_empty() {
                break;
            }
            if rng.gen_bool(0.4) {
                let src = live[rng.gen_range(0..live.len())];
                let p = ds.clone_pointer(&ptrs[src]).map_err(fail("clone"))?;
                ptrs.push(p);
            } else {
                let i = rng.gen_range(0..ptrs.len());
                let was_alive = ptrs[i].is_alive();
                let sent = ds.drop_pointer(&ptrs[i]).map_err(fail("drop"))?;
                ensure(sent == was_alive, || format!("trace {t} step {step}: release sent twice"))?;
                suppressed += usize::from(!sent);
            }
            let live = ptrs.iter().filter(|p| p.is_alive()).count() as u64;
            let count = owner.with_node(|n| n.get_local(&id).map(|o| o.refcount));
            let want = (live > 0).then_some(live);
            ensure(count == want, || {
                format!("trace {t} step {step}: refcount {count:?} with {live} live pointers")
            })?;
        }
        for p in &ptrs {
            ds.drop_pointer(p).map_err(fail("final drop"))?;
        }
        ensure(owner.with_node(|n| n.get_local(&id).is_none()), || {
            format!("trace {t}: object survived its last pointer")
        })?;
        if t % 50 == 0 {
            let e = ds.get(oid, id).expect_err("collected object");
            ensure(e.is_not_found(), || format!("collected object read gave {e}"))?;
        }
    }
    Ok(format!("{traces} pointer lifecycles sound; {suppressed} repeat drops suppressed locally"))
}

fn outcome<T>(r: crate::error::Result<T>, ok: impl FnOnce(T) -> Vec<u8>) -> Vec<u8> {
    match r {
        Ok(v) => {
            let mut out = vec![0];
            out.extend(ok(v));
            out
        }
        Err(NodeError::Remote { code, message }) => {
            let mut out = vec![1, code.to_u8()];
            out.extend(message.into_bytes());
            out
        }
        Err(e) => format!("local: {e}").into_bytes(),
    }
}

/// Observable replies of a fixed session over one transport.
pub fn session_transcript(kind: TransportKind) -> std::result::Result<Vec<Vec<u8>>, String> {
    let (owner, ds, conn) = pair(kind, 80)?;
    owner.with_node(|n| {
        let r = n.registry_mut();
        r.register("bench.echo", &["bytes"], "bytes", false, |a, _| Ok(a[0].clone()))
            .and_then(|_| r.register("bench.fail", &[], "bytes", true, |_, _| Err("declared failure".into())))
            .and_then(|_| r.register("bench.hidden", &[], "bytes", false, |_, _| Err("internal detail".into())))
    })
    .map_err(fail("register"))?;
    // Refresh the exports seen by the caller.
    ds.handshake(owner.id()).map_err(fail("rehandshake"))?;
    let oid = owner.id();
    let mut t = vec![conn.peer.name.clone().into_bytes(), conn.peer.role.clone().into_bytes()];
    let secret = owner.with_node(|n| n.put_local(b"owner only".to_vec(), "weights", "", &[]).unwrap());
    t.push(outcome(ds.get(oid, secret), |o| o.payload));
    t.push(outcome(ds.request_access(oid, secret, "please"), |s| s.encode()));
    let req = owner.with_node(|n| n.pending_requests()[0].id);
    owner.approve(req).map_err(fail("approve"))?;
    t.push(outcome(ds.get(oid, secret), |o| o.encode()));
    let p = ds.put(oid, vec![5; 1000], "bytes", "arg").map_err(fail("put"))?;
    t.push(p.object_id.0.to_vec());
    let r = ds.remote_call(oid, "bench.echo", &[&p], &Kwargs::new());
    let rp = r.map_err(fail("call"))?;
    t.push(outcome(ds.resolve(&rp), |b| b));
    t.push(outcome(ds.remote_call(oid, "bench.fail", &[], &Kwargs::new()), |p| p.object_id.0.to_vec()));
    t.push(outcome(ds.remote_call(oid, "bench.hidden", &[], &Kwargs::new()), |p| p.object_id.0.to_vec()));
    t.push(outcome(ds.remote_call(oid, "os.system", &[], &Kwargs::new()), |p| p.object_id.0.to_vec()));
    t.push(outcome(ds.drop_pointer(&rp), |s| vec![s as u8]));
    t.push(outcome(ds.drop_pointer(&rp), |s| vec![s as u8]));
    t.push(outcome(ds.resolve(&Pointer::new(rp.object_id, oid, "bytes")), |b| b));
    t.push(outcome(ds.delete(oid, p.object_id), |_| vec![]));
    Ok(t)
}


pub fn transport_equivalence() -> Check {
    let mem = session_transcript(TransportKind::InMemory)?;
    let tcp = session_transcript(TransportKind::Tcp)?;
    ensure(mem == tcp, || {
        let i = mem.iter().zip(&tcp).position(|(a, b)| a != b).unwrap_or(mem.len().min(tcp.len()));
        format!("transcripts diverge at step {i}")
    })?;
    Ok(format!("{} replies byte-identical over in_memory and tcp", mem.len()))
}

/// A message for a non-neighbour is relayed; an unknown destination
/// draws an unreachable error.
pub fn forwarding(kind: TransportKind) -> Check {
    let a = NodeRuntime::spawn(Node::new("owner", "data_owner", 90));
    let relay = NodeRuntime::spawn(Node::new("relay", "relay", 91));
    let c = NodeRuntime::spawn(Node::new("client", "data_scientist", 92));
    let _ca = connect(&relay, &a, kind).map_err(fail("relay-owner"))?;
    let _cb = connect(&c, &relay, kind).map_err(fail("client-relay"))?;
    c.with_node(|n| n.add_route(a.id(), relay.id()));
    c.handshake(a.id()).map_err(fail("relayed handshake"))?;
    let p = c.put(a.id(), b"via relay".to_vec(), "bytes", "fwd").map_err(fail("relayed put"))?;
    ensure(a.with_node(|n| n.get_local(&p.object_id).is_some()), || "relayed put did not reach the owner".into())?;
    ensure(relay.with_node(|n| n.get_local(&p.object_id).is_none()), || "relay stored a forwarded object".into())?;
    let got = c.resolve(&p).map_err(fail("relayed get"))?;
    ensure(got == b"via relay", || "relayed get returned wrong bytes".into())?;

    let ghost = NodeId([0xee; 16]);
    c.with_node(|n| n.add_route(ghost, relay.id()));
    let e = c.handshake(ghost).expect_err("ghost destination");
    ensure(
        matches!(e, NodeError::Remote { code: ErrorCode::Unreachable, .. }),
        || format!("unknown destination gave {e}"),
    )?;
    Ok(format!("forwarding over {kind} verified"))
}

pub fn version_mismatch(kind: TransportKind) -> Check {
    let b = NodeRuntime::spawn(Node::new("owner", "data_owner", 95));
    let mut n = Node::new("future", "data_scientist", 96);
    n.set_protocol_version(crate::node::PROTOCOL_VERSION + 1);
    let a = NodeRuntime::spawn(n);
    let e = connect(&a, &b, kind).err().ok_or("mismatched handshake accepted")?;
    ensure(
        matches!(&e, NodeError::Remote { code: ErrorCode::Version, .. }),
        || format!("mismatch gave {e}"),
    )?;
    ensure(b.with_node(|n| n.peer(a.id()).is_none()), || "refused peer was recorded".into())?;
    ensure(a.with_node(|n| n.link_for(b.id()).is_none()), || "refused link kept".into())?;
    Ok(format!("versioned refusal over {kind}: {e}"))
}

/// Named suite results; `scale` of 1.0 runs the full trial counts.
pub fn run_all(scale: f64) -> Vec<(&'static str, Check)> {
    let n = |full: usize| ((full as f64 * scale).ceil() as usize).max(1);
    vec![
        ("signature tamper fuzz", tamper_fuzz(n(10_000), 7)),
        ("signature forgery", forgery_trials(n(100), 8)),
        ("duplicate suppression", duplicate_suppression(9)),
        ("authorization trace replay", authorization_traces(n(200), 40, 10)),
        ("permission matrix (in_memory)", permission_matrix(TransportKind::InMemory)),
        ("permission matrix (tcp)", permission_matrix(TransportKind::Tcp)),
        ("gc model check", gc_traces(n(1000), 11)),
        ("transport equivalence", transport_equivalence()),
        ("forwarding", forwarding(TransportKind::InMemory)),
        ("version mismatch", version_mismatch(TransportKind::Tcp)),
    ]
}
