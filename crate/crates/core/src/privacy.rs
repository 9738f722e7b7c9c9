//! Byte-level scans backing the privacy structure of the flow: the DS never
//! holds image bytes or the secret key, the DO never holds server weights.

use duetlite_ckks::{CkksContext, SecretKey};
use duetlite_node::{Direction, NodeRuntime};
use memchr::memmem;
use serde::Serialize;

use crate::mnist::MnistImage;
use crate::model::{encode_segment, Layer, LayerSpec};
use crate::tensor::Tensor;

/// Needles shorter than this are too likely to match by chance.
pub const MIN_NEEDLE: usize = 32;
const WINDOW: usize = 256;

#[derive(Clone, Debug)]
pub struct Needle {
    pub label: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Hit {
    pub needle: String,
    pub haystack: String,
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrivacyAudit {
    pub ds_frames: usize,
    pub ds_bytes_scanned: usize,
    pub do_bytes_scanned: usize,
    /// Image or secret-key bytes found on the DS side.
    pub ds_hits: Vec<Hit>,
    /// Server weights found among what the DO received or stores.
    pub do_weight_hits: Vec<Hit>,
}

impl PrivacyAudit {
    pub fn is_clean(&self) -> bool {
        self.ds_hits.is_empty() && self.do_weight_hits.is_empty()
    }
}

fn needle(label: String, bytes: Vec<u8>) -> Option<Needle> {
    (bytes.len() >= MIN_NEEDLE).then_some(Needle { label, bytes })
}

/// Windows of `bytes` that are not dominated by a single byte value.
fn windows(label: &str, bytes: &[u8], out: &mut Vec<Needle>) {
    for (i, w) in bytes.chunks_exact(WINDOW).enumerate() {
        let zeros = w.iter().filter(|&&b| b == 0).count();
        if zeros < WINDOW - 8 {
            out.extend(needle(format!("{label}[{}..]", i * WINDOW), w.to_vec()));
        }
    }
}

fn f64_bytes<T: duetlite_ckks::Real>(xs: &[T]) -> Vec<u8> {
    xs.iter().flat_map(|x| x.as_f64().to_le_bytes()).collect()
}

fn f32_bytes<T: duetlite_ckks::Real>(xs: &[T]) -> Vec<u8> {
    xs.iter().flat_map(|x| (x.as_f64() as f32).to_le_bytes()).collect()
}

/// Raw pixels and the normalized image in f64 and f32 encodings.
pub fn image_needles(img: &MnistImage) -> Vec<Needle> {
    let t: Tensor<f64> = img.to_tensor();
    let mut out = Vec::new();
    out.extend(needle("image pixels".into(), img.pixels.clone()));
    windows("image pixels", &img.pixels, &mut out);
    out.extend(needle("image f64".into(), f64_bytes(t.data())));
    out.extend(needle("image f32".into(), f32_bytes(t.data())));
    out
}

/// The ternary coefficients as stored, plus the NTT residues of `s` for
/// every chain prime.
pub fn secret_needles(ctx: &CkksContext, sk: &SecretKey) -> Vec<Needle> {
    let coeffs: Vec<u8> = sk.coefficients().iter().map(|&c| c as u8).collect();
    let mut out = Vec::new();
    out.extend(needle("secret coefficients".into(), coeffs.clone()));
    windows("secret coefficients", &coeffs, &mut out);
    for (i, _) in ctx.chain().iter().enumerate() {
        let table = ctx.table(i);
        let m = table.modulus();
        let mut r: Vec<u64> = sk.coefficients().iter().map(|&c| m.from_i64(c as i64)).collect();
        table.forward(&mut r);
        let bytes: Vec<u8> = r.iter().flat_map(|x| x.to_le_bytes()).collect();
        out.extend(needle(format!("secret ntt mod q{i}"), bytes[..WINDOW].to_vec()));
    }
    out
}

/// The encoded segment and the f64/f32 values of every parameterized layer.
pub fn weight_needles(layers: &[LayerSpec<f64>]) -> Vec<Needle> {
    let mut out = Vec::new();
    out.extend(needle("server segment file".into(), encode_segment(layers)));
    for l in layers {
        let values: Vec<f64> = match &l.layer {
            Layer::Dense(d) => d.weights.values().iter().chain(&d.bias).copied().collect(),
            Layer::Conv(c) => c.weights.iter().chain(&c.bias).copied().collect(),
            _ => continue,
        };
        for (enc, bytes) in [("f64", f64_bytes(&values)), ("f32", f32_bytes(&values))] {
            for (i, w) in bytes.chunks(WINDOW).enumerate().take(16) {
                out.extend(needle(format!("{} {enc} weights[{}..]", l.name, i * WINDOW), w.to_vec()));
            }
        }
    }
    out
}

/// Every logged frame of the node, or only inbound ones, plus its stored
/// objects in their persisted encoding.
pub fn node_haystacks(rt: &NodeRuntime, inbound_only: bool) -> Vec<(String, Vec<u8>)> {
    let mut hay: Vec<(String, Vec<u8>)> = rt
        .message_log()
        .into_iter()
        .enumerate()
        .filter(|(_, e)| !inbound_only || e.direction == Direction::Inbound)
        .map(|(i, e)| (format!("log#{i} {:?}", e.direction), e.frame))
        .collect();
    rt.with_node(|n| {
        for obj in n.store().objects() {
            hay.push((format!("store {} ({})", obj.id, obj.type_tag), obj.encode()));
        }
    });
    hay
}

pub fn scan(haystacks: &[(String, Vec<u8>)], needles: &[Needle]) -> Vec<Hit> {
    let mut hits = Vec::new();
    for n in needles {
        let finder = memmem::Finder::new(&n.bytes);
        for (label, hay) in haystacks {
            if let Some(offset) = finder.find(hay) {
                hits.push(Hit {
                    needle: n.label.clone(),
                    haystack: label.clone(),
                    offset,
                });
            }
        }
    }
    hits
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_finds_embedded_needle() {
        let n = Needle {
            label: "n".into(),
            bytes: (0..64u8).collect(),
        };
        let mut hay = vec![7u8; 100];
        hay.extend(0..64u8);
        let hits = scan(&[("h".into(), hay)], std::slice::from_ref(&n));
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].offset, 100);
        assert!(scan(&[("h".into(), vec![0u8; 1000])], &[n]).is_empty());
    }
}
