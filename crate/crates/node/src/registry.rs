//! Allowlist of remotely callable paths.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{NodeError, Result};
use crate::wire::{Reader, Writer};

pub type Kwargs = BTreeMap<String, String>;

/// Receives argument payloads in declaration order.
pub type HandlerFn = Arc<dyn Fn(&[Vec<u8>], &Kwargs) -> std::result::Result<Vec<u8>, String> + Send + Sync>;

/// Signature of a path as advertised to peers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSignature {
    pub path: String,
    pub arg_tags: Vec<String>,
    pub return_tag: String,
}

impl PathSignature {
    pub fn write(&self, w: &mut Writer) {
        w.str(&self.path).u32(self.arg_tags.len() as u32);
        for t in &self.arg_tags {
            w.str(t);
        }
        w.str(&self.return_tag);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let path = r.string()?;
        let n = r.count(4)?;
        let arg_tags = (0..n).map(|_| r.string()).collect::<Result<_>>()?;
        let return_tag = r.string()?;
        Ok(Self {
            path,
            arg_tags,
            return_tag,
        })
    }
}

#[derive(Clone)]
pub struct Handler {
    pub signature: PathSignature,
    /// Handler failures are reported verbatim instead of opaquely.
    pub expose_errors: bool,
    pub func: HandlerFn,
}

impl fmt::Debug for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Handler")
            .field("signature", &self.signature)
            .field("expose_errors", &self.expose_errors)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, Default)]
pub struct AstRegistry {
    handlers: BTreeMap<String, Handler>,
}

fn valid_path(path: &str) -> bool {
    !path.is_empty()
        && path
            .split('.')
            .all(|seg| !seg.is_empty() && seg.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
}

impl AstRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, path: &str, arg_tags: &[&str], return_tag: &str, expose_errors: bool, func: F) -> Result<()>
    where
        F: Fn(&[Vec<u8>], &Kwargs) -> std::result::Result<Vec<u8>, String> + Send + Sync + 'static,
    {
        if !valid_path(path) {
            return Err(NodeError::Local(format!("invalid call path {path:?}")));
        }
        if self.handlers.contains_key(path) {
            return Err(NodeError::Local(format!("path {path} already registered")));
        }
        let signature = PathSignature {
            path: path.to_string(),
            arg_tags: arg_tags.iter().map(|s| s.to_string()).collect(),
            return_tag: return_tag.to_string(),
        };
        self.handlers.insert(
            path.to_string(),
            Handler {
                signature,
                expose_errors,
                func: Arc::new(func),
            },
        );
        Ok(())
    }

    pub fn lookup(&self, path: &str) -> Option<&Handler> {
        self.handlers.get(path)
    }

    pub fn exports(&self) -> Vec<PathSignature> {
        self.handlers.values().map(|h| h.signature.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.handlers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handlers.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_registered_paths_resolve() {
        let mut reg = AstRegistry::new();
        reg.register("bench.echo", &["bytes"], "bytes", false, |a, _| Ok(a[0].clone()))
            .unwrap();
        assert!(reg.lookup("bench.echo").is_some());
        assert!(reg.lookup("os.system").is_none());
        assert!(reg.register("bench.echo", &[], "bytes", false, |_, _| Ok(vec![])).is_err());
        assert!(reg.register("bad..path", &[], "x", false, |_, _| Ok(vec![])).is_err());
        let h = reg.lookup("bench.echo").unwrap();
        assert_eq!((h.func)(&[vec![4, 2]], &Kwargs::new()).unwrap(), vec![4, 2]);
    }

    #[test]
    fn signature_codec() {
        let s = PathSignature {
            path: "model.run".into(),
            arg_tags: vec!["ciphertext".into(), "evaluation_key".into()],
            return_tag: "ciphertext".into(),
        };
        let mut w = Writer::new();
        s.write(&mut w);
        let buf = w.finish();
        let mut r = Reader::new(&buf);
        assert_eq!(PathSignature::read(&mut r).unwrap(), s);
        r.finish().unwrap();
    }
}
