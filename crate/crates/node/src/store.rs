//! Permissioned object store with reference counts and optional
//! one-file-per-object persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{NodeError, Result};
use crate::wire::{ObjectId, Reader, VerifyKey, Writer};

const OBJECT_MAGIC: &[u8; 4] = b"DSO1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorableObject {
    pub id: ObjectId,
    pub payload: Vec<u8>,
    pub type_tag: String,
    pub description: String,
    /// Keys allowed to read besides the store's root key.
    pub read_permissions: BTreeSet<VerifyKey>,
    pub refcount: u64,
}

impl StorableObject {
    pub fn new(id: ObjectId, payload: Vec<u8>, type_tag: &str, description: &str) -> Self {
        Self {
            id,
            payload,
            type_tag: type_tag.to_string(),
            description: description.to_string(),
            read_permissions: BTreeSet::new(),
            refcount: 1,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(OBJECT_MAGIC)
            .raw(&self.id.0)
            .str(&self.type_tag)
            .str(&self.description)
            .u64(self.refcount)
            .u32(self.read_permissions.len() as u32);
        for k in &self.read_permissions {
            w.raw(&k.0);
        }
        w.bytes(&self.payload);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != OBJECT_MAGIC {
            return Err(NodeError::Codec("bad object magic".into()));
        }
        let id = r.object_id()?;
        let type_tag = r.string()?;
        let description = r.string()?;
        let refcount = r.u64()?;
        let n = r.count(32)?;
        let read_permissions = (0..n).map(|_| r.verify_key()).collect::<Result<_>>()?;
        let payload = r.bytes()?.to_vec();
        r.finish()?;
        Ok(Self {
            id,
            payload,
            type_tag,
            description,
            read_permissions,
            refcount,
        })
    }
}

/// Who may read what without a manual decision.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Policy {
    #[default]
    Manual,
    /// Access requests for objects carrying one of these type tags are
    /// granted when made.
    AutoApprove(BTreeSet<String>),
}

impl Policy {
    pub fn auto_approve<I: IntoIterator<Item = S>, S: Into<String>>(tags: I) -> Self {
        Policy::AutoApprove(tags.into_iter().map(Into::into).collect())
    }

    pub fn approves(&self, type_tag: &str) -> bool {
        match self {
            Policy::Manual => false,
            Policy::AutoApprove(tags) => tags.contains(type_tag),
        }
    }
}

#[derive(Debug, Default)]
pub struct Store {
    objects: BTreeMap<ObjectId, StorableObject>,
    dir: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Directory-backed store; existing object files are loaded.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| NodeError::Local(format!("{}: {e}", dir.display())))?;
        let mut objects = BTreeMap::new();
        let entries = fs::read_dir(&dir).map_err(|e| NodeError::Local(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| NodeError::Local(e.to_string()))?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Ok(id) = ObjectId::from_hex(name) else {
                continue;
            };
            let bytes = fs::read(&path).map_err(|e| NodeError::Local(e.to_string()))?;
            let obj = StorableObject::decode(&bytes)?;
            if obj.id != id {
                return Err(NodeError::Codec(format!("{name} holds object {}", obj.id)));
            }
            objects.insert(id, obj);
        }
        Ok(Self {
            objects,
            dir: Some(dir),
        })
    }

    fn persist(&self, id: &ObjectId) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(id.to_hex());
        match self.objects.get(id) {
            Some(obj) => fs::write(&path, obj.encode()),
            None => match fs::remove_file(&path) {
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
                other => other,
            },
        }
        .map_err(|e| NodeError::Local(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, id: &ObjectId) -> Option<&StorableObject> {
        self.objects.get(id)
    }

    pub fn contains(&self, id: &ObjectId) -> bool {
        self.objects.contains_key(id)
    }

    pub fn insert(&mut self, obj: StorableObject) -> Result<()> {
        let id = obj.id;
        self.objects.insert(id, obj);
        self.persist(&id)
    }

    pub fn remove(&mut self, id: &ObjectId) -> Result<Option<StorableObject>> {
        let old = self.objects.remove(id);
        self.persist(id)?;
        Ok(old)
    }

    /// Applies `f` to an existing object and persists the result.
    pub fn update<R>(&mut self, id: &ObjectId, f: impl FnOnce(&mut StorableObject) -> R) -> Result<Option<R>> {
        let Some(obj) = self.objects.get_mut(id) else {
            return Ok(None);
        };
        let r = f(obj);
        self.persist(id)?;
        Ok(Some(r))
    }

    pub fn ids(&self) -> impl Iterator<Item = &ObjectId> {
        self.objects.keys()
    }

    pub fn objects(&self) -> impl Iterator<Item = &StorableObject> {
        self.objects.values()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(i: u8) -> StorableObject {
        let mut o = StorableObject::new(ObjectId([i; 16]), vec![i; 5], "bytes", "test object");
        o.read_permissions.insert(VerifyKey([7; 32]));
        o
    }

    #[test]
    fn object_codec_roundtrip() {
        let o = obj(3);
        assert_eq!(StorableObject::decode(&o.encode()).unwrap(), o);
        assert!(StorableObject::decode(&o.encode()[1..]).is_err());
    }

    #[test]
    fn policy_matches_tags() {
        let p = Policy::auto_approve(["ciphertext"]);
        assert!(p.approves("ciphertext"));
        assert!(!p.approves("weights"));
        assert!(!Policy::Manual.approves("ciphertext"));
    }

    #[test]
    fn directory_persistence() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path()).unwrap();
            s.insert(obj(1)).unwrap();
            s.insert(obj(2)).unwrap();
            s.update(&ObjectId([2; 16]), |o| o.refcount = 5).unwrap();
            s.remove(&ObjectId([1; 16])).unwrap();
        }
        let s = Store::open(dir.path()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(&ObjectId([2; 16])).unwrap().refcount, 5);
        assert!(dir.path().join(ObjectId([2; 16]).to_hex()).exists());
    }
}
