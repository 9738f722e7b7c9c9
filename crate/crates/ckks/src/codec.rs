//! Little-endian binary formats: ciphertexts ("CKT1"), contexts ("CKX1")
//! and key sets ("CKK1").
//!
//! Ciphertext coefficients are written in coefficient form so the bytes do
//! not depend on the NTT ordering. Key material is written in NTT form.

use std::collections::BTreeMap;

use crate::cipher::Ciphertext;
use crate::context::CkksContext;
use crate::error::{CkksError, Result};
use crate::keys::{EvaluationKeys, KeySet, KeySwitchKey, PublicKey, SecretKey};
use crate::poly::{Form, RingPoly};
use crate::primes::PrimeModulus;

pub const CIPHERTEXT_MAGIC: &[u8; 4] = b"CKT1";
pub const CONTEXT_MAGIC: &[u8; 4] = b"CKX1";
pub const KEYSET_MAGIC: &[u8; 4] = b"CKK1";
pub const FORMAT_VERSION: u16 = 1;
/// magic + version + poly_degree + ct_size + active_primes + scale + level
pub const CIPHERTEXT_HEADER_BYTES: usize = 4 + 2 + 4 + 1 + 1 + 4 + 2;

const FLAG_SECRET: u8 = 1;
const FLAG_RELIN: u8 = 2;

/// Serialized length of a ciphertext with `size` polynomials over `primes` primes.
pub fn ciphertext_bytes(poly_degree: usize, size: usize, primes: usize) -> usize {
    CIPHERTEXT_HEADER_BYTES + size * primes * poly_degree * 8
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CkksError::Codec("truncated input".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(CkksError::Codec(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(want)
            )));
        }
        let v = self.u16()?;
        if v != FORMAT_VERSION {
            return Err(CkksError::Codec(format!("unsupported format version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(CkksError::Codec(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }

    /// Reads `n` residues, each required to be below `q`.
    fn residues(&mut self, n: usize, q: u64) -> Result<Vec<u64>> {
        let raw = self.take(n * 8)?;
        let out: Vec<u64> = raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if out.iter().any(|&x| x >= q) {
            return Err(CkksError::Codec("residue not reduced".into()));
        }
        Ok(out)
    }
}

fn put_header(out: &mut Vec<u8>, magic: &[u8; 4]) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
}

fn put_poly(out: &mut Vec<u8>, p: &RingPoly) {
    for c in &p.comps {
        for &x in c {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

fn get_poly(r: &mut Reader<'_>, n: usize, moduli: &[u64], form: Form) -> Result<RingPoly> {
    let comps = moduli
        .iter()
        .map(|&q| r.residues(n, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(RingPoly { comps, form })
}

/// log2(scale) in 1/256 units; scales below 1 clamp to 0.
fn encode_scale(scale: f64) -> u32 {
    (scale.log2() * 256.0).round().clamp(0.0, u32::MAX as f64) as u32
}

pub fn serialize_ct(ctx: &CkksContext, ct: &Ciphertext) -> Vec<u8> {
    let n = ctx.poly_degree();
    let mut out = Vec::with_capacity(ciphertext_bytes(n, ct.size(), ct.active_primes()));
    put_header(&mut out, CIPHERTEXT_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.push(ct.size() as u8);
    out.push(ct.active_primes() as u8);
    out.extend_from_slice(&encode_scale(ct.scale).to_le_bytes());
    out.extend_from_slice(&(ct.level as u16).to_le_bytes());
    let basis = ctx.basis(ct.level);
    for p in &ct.polys {
        let mut c = p.clone();
        c.to_coeff(&basis);
        put_poly(&mut out, &c);
    }
    out
}

pub fn deserialize_ct(ctx: &CkksContext, bytes: &[u8]) -> Result<Ciphertext> {
    let mut r = Reader::new(bytes);
    r.magic(CIPHERTEXT_MAGIC)?;
    let n = r.u32()? as usize;
    if n != ctx.poly_degree() {
        return Err(CkksError::Codec(format!(
            "poly degree {n} does not match context degree {}",
            ctx.poly_degree()
        )));
    }
    let size = r.u8()? as usize;
    if !(2..=3).contains(&size) {
        return Err(CkksError::Codec(format!("ciphertext size {size}")));
    }
    let primes = r.u8()? as usize;
    let scale = (r.u32()? as f64 / 256.0).exp2();
    let level = r.u16()? as usize;
    if primes != level + 1 || level > ctx.max_level() {
        return Err(CkksError::Codec(format!("level {level} with {primes} primes")));
    }
    let moduli: Vec<u64> = ctx.chain()[..=level].iter().map(PrimeModulus::value).collect();
    let basis = ctx.basis(level);
    let mut polys = Vec::with_capacity(size);
    for _ in 0..size {
        let mut p = get_poly(&mut r, n, &moduli, Form::Coefficient)?;
        p.to_ntt(&basis);
        polys.push(p);
    }
    r.finish()?;
    Ok(Ciphertext { polys, scale, level })
}

fn put_prime(out: &mut Vec<u8>, p: &PrimeModulus) {
    out.extend_from_slice(&p.value().to_le_bytes());
    out.push(p.bit_length as u8);
    out.extend_from_slice(&p.root.to_le_bytes());
}

fn get_prime(r: &mut Reader<'_>, n: usize) -> Result<PrimeModulus> {
    let q = r.u64()?;
    let bits = r.u8()? as u32;
    let root = r.u64()?;
    let p = PrimeModulus::from_parts(q, root, n).map_err(|e| CkksError::Codec(e.to_string()))?;
    if p.bit_length != bits {
        return Err(CkksError::Codec(format!("prime {q} is not {bits} bits")));
    }
    Ok(p)
}

pub fn serialize_context(ctx: &CkksContext) -> Vec<u8> {
    let mut out = Vec::new();
    put_header(&mut out, CONTEXT_MAGIC);
    out.extend_from_slice(&(ctx.poly_degree() as u32).to_le_bytes());
    out.extend_from_slice(&ctx.scale_bits().to_le_bytes());
    out.push(ctx.chain().len() as u8);
    for p in ctx.chain() {
        put_prime(&mut out, p);
    }
    put_prime(&mut out, ctx.special_prime());
    out
}

pub fn deserialize_context(bytes: &[u8]) -> Result<CkksContext> {
    let mut r = Reader::new(bytes);
    r.magic(CONTEXT_MAGIC)?;
    let n = r.u32()? as usize;
    if !n.is_power_of_two() || n < 8 {
        return Err(CkksError::Codec(format!("poly degree {n}")));
    }
    let scale_bits = r.u32()?;
    let len = r.u8()? as usize;
    if len == 0 {
        return Err(CkksError::Codec("empty prime chain".into()));
    }
    let chain = (0..len).map(|_| get_prime(&mut r, n)).collect::<Result<Vec<_>>>()?;
    let special = get_prime(&mut r, n)?;
    r.finish()?;
    if !(1..=60).contains(&scale_bits) {
        return Err(CkksError::Codec(format!("scale bits {scale_bits}")));
    }
    CkksContext::from_primes(n, chain, special, scale_bits).map_err(|e| CkksError::Codec(e.to_string()))
}

fn put_switch_key(out: &mut Vec<u8>, k: &KeySwitchKey) {
    out.push(k.digits.len() as u8);
    for (b, a) in &k.digits {
        put_poly(out, b);
        put_poly(out, a);
    }
}

fn get_switch_key(r: &mut Reader<'_>, ctx: &CkksContext, ext: &[u64]) -> Result<KeySwitchKey> {
    let count = r.u8()? as usize;
    if count != ctx.chain().len() {
        return Err(CkksError::Codec(format!("key-switch key with {count} digits")));
    }
    let n = ctx.poly_degree();
    let digits = (0..count)
        .map(|_| Ok((get_poly(r, n, ext, Form::Ntt)?, get_poly(r, n, ext, Form::Ntt)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(KeySwitchKey { digits })
}

fn serialize_keys(ctx: &CkksContext, secret: Option<&SecretKey>, eval: &EvaluationKeys) -> Vec<u8> {
    let mut out = Vec::new();
    put_header(&mut out, KEYSET_MAGIC);
    out.extend_from_slice(&(ctx.poly_degree() as u32).to_le_bytes());
    out.push(ctx.chain().len() as u8);
    let mut flags = 0;
    if secret.is_some() {
        flags |= FLAG_SECRET;
    }
    if eval.relin.is_some() {
        flags |= FLAG_RELIN;
    }
    out.push(flags);
    if let Some(s) = secret {
        out.extend(s.coeffs.iter().map(|&c| c as u8));
    }
    put_poly(&mut out, &eval.public.b);
    put_poly(&mut out, &eval.public.a);
    if let Some(k) = &eval.relin {
        put_switch_key(&mut out, k);
    }
    out.extend_from_slice(&(eval.galois.len() as u16).to_le_bytes());
    for (&step, k) in &eval.galois {
        out.extend_from_slice(&(step as u32).to_le_bytes());
        put_switch_key(&mut out, k);
    }
    out
}

fn deserialize_keys(ctx: &CkksContext, bytes: &[u8]) -> Result<(Option<SecretKey>, EvaluationKeys)> {
    let mut r = Reader::new(bytes);
    r.magic(KEYSET_MAGIC)?;
    let n = r.u32()? as usize;
    let len = r.u8()? as usize;
    if n != ctx.poly_degree() || len != ctx.chain().len() {
        return Err(CkksError::Codec(format!(
            "key set for degree {n} with {len} primes does not match the context"
        )));
    }
    let flags = r.u8()?;
    if flags & !(FLAG_SECRET | FLAG_RELIN) != 0 {
        return Err(CkksError::Codec(format!("unknown key flags {flags:#x}")));
    }
    let secret = if flags & FLAG_SECRET != 0 {
        let raw = r.take(n)?;
        let coeffs: Vec<i8> = raw.iter().map(|&b| b as i8).collect();
        if coeffs.iter().any(|c| !(-1..=1).contains(c)) {
            return Err(CkksError::Codec("secret key is not ternary".into()));
        }
        Some(SecretKey { coeffs })
    } else {
        None
    };
    let chain: Vec<u64> = ctx.chain().iter().map(PrimeModulus::value).collect();
    let mut ext = chain.clone();
    ext.push(ctx.special_prime().value());
    let public = PublicKey {
        b: get_poly(&mut r, n, &chain, Form::Ntt)?,
        a: get_poly(&mut r, n, &chain, Form::Ntt)?,
    };
    let relin = if flags & FLAG_RELIN != 0 {
        Some(get_switch_key(&mut r, ctx, &ext)?)
    } else {
        None
    };
    let count = r.u16()? as usize;
    let mut galois = BTreeMap::new();
    for _ in 0..count {
        let step = r.u32()? as usize;
        if step == 0 || step >= ctx.slot_count() || galois.contains_key(&step) {
            return Err(CkksError::Codec(format!("invalid rotation step {step}")));
        }
        galois.insert(step, get_switch_key(&mut r, ctx, &ext)?);
    }
    r.finish()?;
    Ok((
        secret,
        EvaluationKeys {
            public,
            relin,
            galois,
        },
    ))
}

/// Full key set including the secret key.
pub fn serialize_keyset(ctx: &CkksContext, keys: &KeySet) -> Vec<u8> {
    serialize_keys(ctx, Some(&keys.secret), &keys.eval)
}

pub fn deserialize_keyset(ctx: &CkksContext, bytes: &[u8]) -> Result<KeySet> {
    match deserialize_keys(ctx, bytes)? {
        (Some(secret), eval) => Ok(KeySet { secret, eval }),
        (None, _) => Err(CkksError::Codec("key set has no secret key".into())),
    }
}

/// Public evaluation keys only; the secret flag is clear.
pub fn serialize_eval_keys(ctx: &CkksContext, keys: &EvaluationKeys) -> Vec<u8> {
    serialize_keys(ctx, None, keys)
}

pub fn deserialize_eval_keys(ctx: &CkksContext, bytes: &[u8]) -> Result<EvaluationKeys> {
    match deserialize_keys(ctx, bytes)? {
        (None, eval) => Ok(eval),
        (Some(_), _) => Err(CkksError::Codec("evaluation key blob carries a secret key".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::{decode, decrypt, encode, encrypt};
    use crate::eval::mul_no_relin;
    use crate::keys::keygen;

    #[test]
    fn ciphertext_roundtrip_and_size() {
        let ctx = CkksContext::new(64, &[31, 26, 31], 26).unwrap();
        let keys = keygen(&ctx, &[], 1).unwrap();
        let pt = encode(&ctx, &[0.5, -1.5], 2, ctx.scale()).unwrap();
        let ct = encrypt(&ctx, keys.public(), &pt, 2).unwrap();
        let bytes = serialize_ct(&ctx, &ct);
        assert_eq!(bytes.len(), CIPHERTEXT_HEADER_BYTES + 2 * 3 * 64 * 8);
        assert_eq!(bytes.len(), ciphertext_bytes(64, 2, 3));
        let back = deserialize_ct(&ctx, &bytes).unwrap();
        assert_eq!(back, ct);
        assert_eq!(serialize_ct(&ctx, &back), bytes);
        let v = decode(&ctx, &decrypt(&ctx, &keys.secret, &back).unwrap()).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-3 && (v[1] + 1.5).abs() < 1e-3);

        let three = mul_no_relin(&ctx, &ct, &ct).unwrap();
        let b3 = serialize_ct(&ctx, &three);
        assert_eq!(b3.len(), ciphertext_bytes(64, 3, 3));
        assert_eq!(serialize_ct(&ctx, &deserialize_ct(&ctx, &b3).unwrap()), b3);
    }

    #[test]
    fn ciphertext_rejects_corruption() {
        let ctx = CkksContext::new(16, &[31, 31], 26).unwrap();
        let keys = keygen(&ctx, &[], 1).unwrap();
        let pt = encode(&ctx, &[1.0f64], 1, ctx.scale()).unwrap();
        let bytes = serialize_ct(&ctx, &encrypt(&ctx, keys.public(), &pt, 3).unwrap());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(deserialize_ct(&ctx, &bad), Err(CkksError::Codec(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(deserialize_ct(&ctx, &bad).is_err());
        assert!(deserialize_ct(&ctx, &bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(deserialize_ct(&ctx, &long).is_err());
        let mut unreduced = bytes.clone();
        let at = CIPHERTEXT_HEADER_BYTES;
        unreduced[at..at + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(deserialize_ct(&ctx, &unreduced).is_err());
        let other = CkksContext::new(32, &[31, 31], 26).unwrap();
        assert!(deserialize_ct(&other, &bytes).is_err());
    }

    #[test]
    fn context_roundtrip() {
        let ctx = CkksContext::new(1024, &[31, 26, 31], 26).unwrap();
        let bytes = serialize_context(&ctx);
        let back = deserialize_context(&bytes).unwrap();
        assert_eq!(back.chain(), ctx.chain());
        assert_eq!(back.special_prime(), ctx.special_prime());
        assert_eq!(serialize_context(&back), bytes);
        assert!(deserialize_context(&bytes[..10]).is_err());
    }

    #[test]
    fn keyset_roundtrip_and_determinism() {
        let ctx = CkksContext::new(32, &[31, 26, 31], 26).unwrap();
        let keys = keygen(&ctx, &[1, -2], 4).unwrap();
        let bytes = serialize_keyset(&ctx, &keys);
        assert_eq!(bytes, serialize_keyset(&ctx, &keygen(&ctx, &[1, -2], 4).unwrap()));
        let back = deserialize_keyset(&ctx, &bytes).unwrap();
        assert_eq!(back, keys);
        let eval = serialize_eval_keys(&ctx, &keys.eval);
        assert_eq!(deserialize_eval_keys(&ctx, &eval).unwrap(), keys.eval);
        assert!(deserialize_keyset(&ctx, &eval).is_err());
        assert!(deserialize_eval_keys(&ctx, &bytes).is_err());
        let secret_bytes: Vec<u8> = keys.secret.coefficients().iter().map(|&c| c as u8).collect();
        assert!(!eval.windows(secret_bytes.len()).any(|w| w == secret_bytes.as_slice()));
    }
}
