//! Service bodies carried after the payload routing header.

use crate::error::{ErrorCode, NodeError, Result};
use crate::registry::{Kwargs, PathSignature};
use crate::wire::{NodeId, ObjectId, Reader, Writer};

pub const GC_RETAIN: u8 = 1;
pub const GC_RELEASE: u8 = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PutBody {
    pub object_id: ObjectId,
    pub type_tag: String,
    pub description: String,
    pub payload: Vec<u8>,
}

impl PutBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.object_id.0)
            .str(&self.type_tag)
            .str(&self.description)
            .bytes(&self.payload);
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let v = Self {
            object_id: r.object_id()?,
            type_tag: r.string()?,
            description: r.string()?,
            payload: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(v)
    }
}

/// Reply to a get: the object minus its id and bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectBody {
    pub type_tag: String,
    pub description: String,
    pub payload: Vec<u8>,
}

impl ObjectBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.type_tag).str(&self.description).bytes(&self.payload);
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let v = Self {
            type_tag: r.string()?,
            description: r.string()?,
            payload: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(v)
    }
}

pub fn encode_object_id(id: &ObjectId) -> Vec<u8> {
    id.0.to_vec()
}

pub fn decode_object_id(b: &[u8]) -> Result<ObjectId> {
    let mut r = Reader::new(b);
    let id = r.object_id()?;
    r.finish()?;
    Ok(id)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallBody {
    pub path: String,
    /// Chosen by the caller so it can build its pointer before the reply.
    pub result_id: ObjectId,
    /// (location, object) per argument.
    pub args: Vec<(NodeId, ObjectId)>,
    pub kwargs: Kwargs,
}

impl CallBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.path).raw(&self.result_id.0).u32(self.args.len() as u32);
        for (loc, id) in &self.args {
            w.raw(&loc.0).raw(&id.0);
        }
        w.u32(self.kwargs.len() as u32);
        for (k, v) in &self.kwargs {
            w.str(k).str(v);
        }
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let path = r.string()?;
        let result_id = r.object_id()?;
        let n = r.count(32)?;
        let args = (0..n)
            .map(|_| Ok((r.node_id()?, r.object_id()?)))
            .collect::<Result<_>>()?;
        let m = r.count(8)?;
        let mut kwargs = Kwargs::new();
        for _ in 0..m {
            let k = r.string()?;
            if kwargs.insert(k.clone(), r.string()?).is_some() {
                return Err(NodeError::Codec(format!("duplicate kwarg {k}")));
            }
        }
        r.finish()?;
        Ok(Self {
            path,
            result_id,
            args,
            kwargs,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallReply {
    pub result_id: ObjectId,
    pub return_tag: String,
}

impl CallReply {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.result_id.0).str(&self.return_tag);
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let v = Self {
            result_id: r.object_id()?,
            return_tag: r.string()?,
        };
        r.finish()?;
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessRequestBody {
    pub object_id: ObjectId,
    pub reason: String,
}

impl AccessRequestBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.object_id.0).str(&self.reason);
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let v = Self {
            object_id: r.object_id()?,
            reason: r.string()?,
        };
        r.finish()?;
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessStatus {
    Approved,
    /// Awaiting the owner; carries the owner-side request id.
    Pending(u64),
}

impl AccessStatus {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            AccessStatus::Approved => w.u8(1).u64(0),
            AccessStatus::Pending(id) => w.u8(0).u64(*id),
        };
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let (flag, id) = (r.u8()?, r.u64()?);
        r.finish()?;
        match flag {
            1 => Ok(AccessStatus::Approved),
            0 => Ok(AccessStatus::Pending(id)),
            f => Err(NodeError::Codec(format!("bad access status {f}"))),
        }
    }
}

/// Owner's decision, sent to the requester's node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessDecision {
    pub object_id: ObjectId,
    pub approved: bool,
}

impl AccessDecision {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.object_id.0).u8(self.approved as u8);
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let object_id = r.object_id()?;
        let approved = match r.u8()? {
            0 => false,
            1 => true,
            f => return Err(NodeError::Codec(format!("bad decision flag {f}"))),
        };
        r.finish()?;
        Ok(Self { object_id, approved })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GcBody {
    pub object_id: ObjectId,
    pub op: u8,
}

impl GcBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.object_id.0).u8(self.op);
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let v = Self {
            object_id: r.object_id()?,
            op: r.u8()?,
        };
        r.finish()?;
        if v.op != GC_RETAIN && v.op != GC_RELEASE {
            return Err(NodeError::Codec(format!("bad gc op {}", v.op)));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandshakeBody {
    pub version: u16,
    pub node_id: NodeId,
    pub name: String,
    /// Role assertion standing in for a verifiable credential.
    pub role: String,
    pub exports: Vec<PathSignature>,
}

impl HandshakeBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u16(self.version)
            .raw(&self.node_id.0)
            .str(&self.name)
            .str(&self.role)
            .u32(self.exports.len() as u32);
        for e in &self.exports {
            e.write(&mut w);
        }
        w.finish()
    }

    /// Reads only the version when the rest may be in an unknown layout.
    pub fn peek_version(b: &[u8]) -> Result<u16> {
        Reader::new(b).u16()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let version = r.u16()?;
        let node_id = r.node_id()?;
        let name = r.string()?;
        let role = r.string()?;
        let n = r.count(12)?;
        let exports = (0..n).map(|_| PathSignature::read(&mut r)).collect::<Result<_>>()?;
        r.finish()?;
        Ok(Self {
            version,
            node_id,
            name,
            role,
            exports,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorBody {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.code.to_u8()).str(&self.message);
        w.finish()
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let v = Self {
            code: ErrorCode::from_u8(r.u8()?),
            message: r.string()?,
        };
        r.finish()?;
        Ok(v)
    }

    pub fn into_error(self) -> NodeError {
        NodeError::Remote {
            code: self.code,
            message: self.message,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bodies_roundtrip() {
        let put = PutBody {
            object_id: ObjectId([1; 16]),
            type_tag: "ciphertext".into(),
            description: "d".into(),
            payload: vec![1, 2, 3],
        };
        assert_eq!(PutBody::decode(&put.encode()).unwrap(), put);

        let mut kwargs = Kwargs::new();
        kwargs.insert("split".into(), "fc1_act".into());
        let call = CallBody {
            path: "model.run".into(),
            result_id: ObjectId([2; 16]),
            args: vec![(NodeId([3; 16]), ObjectId([4; 16]))],
            kwargs,
        };
        assert_eq!(CallBody::decode(&call.encode()).unwrap(), call);

        for s in [AccessStatus::Approved, AccessStatus::Pending(7)] {
            assert_eq!(AccessStatus::decode(&s.encode()).unwrap(), s);
        }
        let gc = GcBody {
            object_id: ObjectId([5; 16]),
            op: GC_RELEASE,
        };
        assert_eq!(GcBody::decode(&gc.encode()).unwrap(), gc);
        assert!(GcBody::decode(&GcBody { op: 9, ..gc }.encode()).is_err());

        let hs = HandshakeBody {
            version: 1,
            node_id: NodeId([6; 16]),
            name: "do".into(),
            role: "data_owner".into(),
            exports: vec![],
        };
        assert_eq!(HandshakeBody::decode(&hs.encode()).unwrap(), hs);
        assert_eq!(HandshakeBody::peek_version(&hs.encode()).unwrap(), 1);

        let e = ErrorBody {
            code: ErrorCode::NotFound,
            message: "x".into(),
        };
        assert_eq!(ErrorBody::decode(&e.encode()).unwrap(), e);
    }
}
