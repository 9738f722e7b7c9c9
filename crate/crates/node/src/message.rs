//! Signed message envelope.
//!
//! Wire form: `"DUT1" | u32 length | msg_id | destination | sender_key |
//! kind | u32 payload length | payload | signature`. The signature covers
//! `msg_id || destination || kind || payload`; the payload starts with a
//! routing header (reply flag, correlation id, origin node) so the header
//! is authenticated too.

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};

use crate::error::{NodeError, Result};
use crate::wire::{MsgId, NodeId, Reader, VerifyKey, Writer};

pub const ENVELOPE_MAGIC: &[u8; 4] = b"DUT1";
const FLAG_REPLY: u8 = 1;
const HEADER_BYTES: usize = 1 + 16 + 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    StorePut,
    StoreGet,
    StoreDelete,
    RemoteCall,
    AccessRequest,
    AccessReply,
    GcRelease,
    Handshake,
    ErrorReply,
    Unknown(u8),
}

impl MessageKind {
    pub fn to_u8(self) -> u8 {
        match self {
            MessageKind::StorePut => 1,
            MessageKind::StoreGet => 2,
            MessageKind::StoreDelete => 3,
            MessageKind::RemoteCall => 4,
            MessageKind::AccessRequest => 5,
            MessageKind::AccessReply => 6,
            MessageKind::GcRelease => 7,
            MessageKind::Handshake => 8,
            MessageKind::ErrorReply => 9,
            MessageKind::Unknown(v) => v,
        }
    }

    pub fn from_u8(v: u8) -> Self {
        match v {
            1 => MessageKind::StorePut,
            2 => MessageKind::StoreGet,
            3 => MessageKind::StoreDelete,
            4 => MessageKind::RemoteCall,
            5 => MessageKind::AccessRequest,
            6 => MessageKind::AccessReply,
            7 => MessageKind::GcRelease,
            8 => MessageKind::Handshake,
            9 => MessageKind::ErrorReply,
            other => MessageKind::Unknown(other),
        }
    }
}

/// Routing header plus service body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Payload {
    pub reply: bool,
    /// Request id this message answers; zero for requests.
    pub correlation: MsgId,
    /// Node that created the message; replies go back here.
    pub origin: NodeId,
    pub body: Vec<u8>,
}

impl Payload {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(if self.reply { FLAG_REPLY } else { 0 })
            .raw(&self.correlation.0)
            .raw(&self.origin.0)
            .raw(&self.body);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(NodeError::Codec("payload shorter than its header".into()));
        }
        let mut r = Reader::new(bytes);
        let flags = r.u8()?;
        if flags & !FLAG_REPLY != 0 {
            return Err(NodeError::Codec(format!("unknown payload flags {flags:#x}")));
        }
        Ok(Self {
            reply: flags & FLAG_REPLY != 0,
            correlation: r.msg_id()?,
            origin: r.node_id()?,
            body: bytes[HEADER_BYTES..].to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedMessage {
    pub msg_id: MsgId,
    pub destination: NodeId,
    pub sender_key: VerifyKey,
    pub kind: MessageKind,
    pub payload: Vec<u8>,
    pub signature: [u8; 64],
}

fn signed_bytes(msg_id: &MsgId, destination: &NodeId, kind: MessageKind, payload: &[u8]) -> Vec<u8> {
    let mut v = Vec::with_capacity(33 + payload.len());
    v.extend_from_slice(&msg_id.0);
    v.extend_from_slice(&destination.0);
    v.push(kind.to_u8());
    v.extend_from_slice(payload);
    v
}

impl SignedMessage {
    pub fn sign(
        key: &SigningKey,
        msg_id: MsgId,
        destination: NodeId,
        kind: MessageKind,
        payload: Vec<u8>,
    ) -> Self {
        let signature = key.sign(&signed_bytes(&msg_id, &destination, kind, &payload));
        Self {
            msg_id,
            destination,
            sender_key: VerifyKey(key.verifying_key().to_bytes()),
            kind,
            payload,
            signature: signature.to_bytes(),
        }
    }

    pub fn verify(&self) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&self.sender_key.0) else {
            return false;
        };
        let sig = Signature::from_bytes(&self.signature);
        vk.verify_strict(&signed_bytes(&self.msg_id, &self.destination, self.kind, &self.payload), &sig)
            .is_ok()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut inner = Writer::new();
        inner
            .raw(&self.msg_id.0)
            .raw(&self.destination.0)
            .raw(&self.sender_key.0)
            .u8(self.kind.to_u8())
            .bytes(&self.payload)
            .raw(&self.signature);
        let inner = inner.finish();
        let mut w = Writer::new();
        w.raw(ENVELOPE_MAGIC).bytes(&inner);
        w.finish()
    }

    pub fn decode(frame: &[u8]) -> Result<Self> {
        let mut r = Reader::new(frame);
        if r.take(4)? != ENVELOPE_MAGIC {
            return Err(NodeError::Codec("bad envelope magic".into()));
        }
        let inner = r.bytes()?;
        r.finish()?;
        let mut r = Reader::new(inner);
        let msg = Self {
            msg_id: r.msg_id()?,
            destination: r.node_id()?,
            sender_key: r.verify_key()?,
            kind: MessageKind::from_u8(r.u8()?),
            payload: r.bytes()?.to_vec(),
            signature: r.array()?,
        };
        r.finish()?;
        Ok(msg)
    }

    pub fn parsed_payload(&self) -> Result<Payload> {
        Payload::decode(&self.payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(seed: u8) -> SigningKey {
        SigningKey::from_bytes(&[seed; 32])
    }

    fn sample() -> SignedMessage {
        let payload = Payload {
            reply: false,
            correlation: MsgId::default(),
            origin: NodeId([1; 16]),
            body: b"hello".to_vec(),
        };
        SignedMessage::sign(&key(1), MsgId([9; 16]), NodeId([2; 16]), MessageKind::StoreGet, payload.encode())
    }

    #[test]
    fn sign_verify_roundtrip() {
        let m = sample();
        assert!(m.verify());
        let back = SignedMessage::decode(&m.encode()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.parsed_payload().unwrap().body, b"hello");
    }

    #[test]
    fn tampering_breaks_signature() {
        let m = sample();
        let mut p = m.clone();
        p.payload[20] ^= 1;
        assert!(!p.verify());
        let mut k = m.clone();
        k.kind = MessageKind::StorePut;
        assert!(!k.verify());
        let mut d = m.clone();
        d.destination.0[0] ^= 0x80;
        assert!(!d.verify());
        let mut s = m.clone();
        s.sender_key = VerifyKey(key(2).verifying_key().to_bytes());
        assert!(!s.verify());
    }

    #[test]
    fn kinds_roundtrip() {
        for v in 0..=255u8 {
            assert_eq!(MessageKind::from_u8(v).to_u8(), v);
        }
    }

    #[test]
    fn rejects_malformed_frames() {
        let f = sample().encode();
        assert!(SignedMessage::decode(&f[..f.len() - 1]).is_err());
        let mut g = f.clone();
        g[0] = b'X';
        assert!(SignedMessage::decode(&g).is_err());
        let mut h = f.clone();
        h.push(0);
        assert!(SignedMessage::decode(&h).is_err());
    }
}
