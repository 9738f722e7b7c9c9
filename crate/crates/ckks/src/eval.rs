//! Homomorphic operations. All functions are pure: inputs are borrowed and a
//! fresh ciphertext is returned.

use crate::cipher::{Ciphertext, Plaintext};
use crate::context::CkksContext;
use crate::error::{CkksError, Result};
use crate::keys::{key_switch, normalize_step, EvaluationKeys, KeySwitchKey};
use crate::poly::RingPoly;

/// Relative scale difference tolerated by additions.
pub const SCALE_TOLERANCE: f64 = 1.0 / 1024.0;

fn same_level(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CkksError::LevelMismatch { left: a, right: b });
    }
    Ok(())
}

fn same_scale(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > SCALE_TOLERANCE * a.max(b) {
        return Err(CkksError::ScaleMismatch { left: a, right: b });
    }
    Ok(())
}

fn require_size2(ct: &Ciphertext) -> Result<()> {
    if ct.size() != 2 {
        return Err(CkksError::State(format!("expected a size-2 ciphertext, got size {}", ct.size())));
    }
    Ok(())
}

pub fn add(ctx: &CkksContext, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    same_level(a.level, b.level)?;
    same_scale(a.scale, b.scale)?;
    let basis = ctx.basis(a.level);
    let (long, short) = if a.size() >= b.size() { (a, b) } else { (b, a) };
    let mut out = long.clone();
    for (p, q) in out.polys.iter_mut().zip(&short.polys) {
        p.add_assign(q, &basis);
    }
    out.scale = a.scale;
    Ok(out)
}

pub fn add_plain(ctx: &CkksContext, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
    same_level(ct.level, pt.level)?;
    same_scale(ct.scale, pt.scale)?;
    let mut out = ct.clone();
    out.polys[0].add_assign(&pt.poly, &ctx.basis(ct.level));
    Ok(out)
}

pub fn sub(ctx: &CkksContext, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    let mut neg = b.clone();
    let basis = ctx.basis(b.level);
    for p in &mut neg.polys {
        p.neg_assign(&basis);
    }
    add(ctx, a, &neg)
}

/// Slot-wise product with a plaintext; the scales multiply.
pub fn mul_plain(ctx: &CkksContext, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
    same_level(ct.level, pt.level)?;
    let basis = ctx.basis(ct.level);
    Ok(Ciphertext {
        polys: ct.polys.iter().map(|p| p.mul(&pt.poly, &basis)).collect(),
        scale: ct.scale * pt.scale,
        level: ct.level,
    })
}

/// Tensor product of two size-2 ciphertexts, leaving a size-3 result.
pub fn mul_no_relin(ctx: &CkksContext, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    same_level(a.level, b.level)?;
    require_size2(a)?;
    require_size2(b)?;
    let basis = ctx.basis(a.level);
    let d0 = a.polys[0].mul(&b.polys[0], &basis);
    let mut d1 = a.polys[0].mul(&b.polys[1], &basis);
    d1.mul_add_assign(&a.polys[1], &b.polys[0], &basis);
    let d2 = a.polys[1].mul(&b.polys[1], &basis);
    Ok(Ciphertext {
        polys: vec![d0, d1, d2],
        scale: a.scale * b.scale,
        level: a.level,
    })
}

fn relin_key(keys: &EvaluationKeys) -> Result<&KeySwitchKey> {
    keys.relin
        .as_ref()
        .ok_or_else(|| CkksError::MissingKey("relinearization key".into()))
}

pub fn relinearize(ctx: &CkksContext, ct: &Ciphertext, keys: &EvaluationKeys) -> Result<Ciphertext> {
    if ct.size() == 2 {
        return Ok(ct.clone());
    }
    if ct.size() != 3 {
        return Err(CkksError::State(format!("cannot relinearize size {}", ct.size())));
    }
    let key = relin_key(keys)?;
    let basis = ctx.basis(ct.level);
    let mut d2 = ct.polys[2].clone();
    d2.to_coeff(&basis);
    let (k0, k1) = key_switch(ctx, &d2, ct.level, key);
    let mut c0 = ct.polys[0].clone();
    c0.add_assign(&k0, &basis);
    let mut c1 = ct.polys[1].clone();
    c1.add_assign(&k1, &basis);
    Ok(Ciphertext {
        polys: vec![c0, c1],
        scale: ct.scale,
        level: ct.level,
    })
}

/// Ciphertext product followed by relinearisation.
pub fn mul(ctx: &CkksContext, a: &Ciphertext, b: &Ciphertext, keys: &EvaluationKeys) -> Result<Ciphertext> {
    relin_key(keys)?;
    relinearize(ctx, &mul_no_relin(ctx, a, b)?, keys)
}

/// Divides by the last active prime and drops it.
pub fn rescale(ctx: &CkksContext, ct: &Ciphertext) -> Result<Ciphertext> {
    if ct.level == 0 {
        return Err(CkksError::DepthExhausted);
    }
    let l = ct.level;
    let q_last = ctx.table(l);
    if ct.scale < q_last.modulus().value() as f64 / 2.0 {
        return Err(CkksError::State(format!(
            "scale 2^{:.2} too small to drop a {}-bit prime",
            ct.scale.log2(),
            q_last.modulus().bits()
        )));
    }
    let inv = ctx.rescale_inverses(l);
    let n = ctx.poly_degree();
    let mut tmp = vec![0u64; n];
    let polys = ct
        .polys
        .iter()
        .map(|p| {
            let mut p = p.clone();
            let mut last = p.comps.pop().expect("active prime");
            q_last.inverse(&mut last);
            for (i, comp) in p.comps.iter_mut().enumerate() {
                let t = ctx.table(i);
                let m = t.modulus();
                for (y, &x) in tmp.iter_mut().zip(&last) {
                    *y = m.from_i64(q_last.modulus().center(x));
                }
                t.forward(&mut tmp);
                let ws = m.shoup(inv[i]);
                for (a, &y) in comp.iter_mut().zip(&tmp) {
                    *a = m.mul_shoup(m.sub(*a, y), inv[i], ws);
                }
            }
            p
        })
        .collect();
    Ok(Ciphertext {
        polys,
        scale: ct.scale / q_last.modulus().value() as f64,
        level: l - 1,
    })
}

/// Drops primes above `level` without changing the scale.
pub fn drop_to_level(ct: &Ciphertext, level: usize) -> Result<Ciphertext> {
    if level > ct.level {
        return Err(CkksError::LevelMismatch {
            left: ct.level,
            right: level,
        });
    }
    let mut out = ct.clone();
    for p in &mut out.polys {
        p.truncate(level + 1);
    }
    out.level = level;
    Ok(out)
}

fn apply_galois(ctx: &CkksContext, ct: &Ciphertext, step: usize, key: &KeySwitchKey) -> Ciphertext {
    let basis = ctx.basis(ct.level);
    let g = ctx.encoder().galois_element(step);
    let permute = |p: &RingPoly| {
        let mut c = p.clone();
        c.to_coeff(&basis);
        c.automorphism(g, &basis)
    };
    let mut c0 = permute(&ct.polys[0]);
    c0.to_ntt(&basis);
    let c1 = permute(&ct.polys[1]);
    let (k0, k1) = key_switch(ctx, &c1, ct.level, key);
    c0.add_assign(&k0, &basis);
    Ciphertext {
        polys: vec![c0, k1],
        scale: ct.scale,
        level: ct.level,
    }
}

/// Rotates slots left by `step` using the Galois key for exactly that step.
pub fn rotate(ctx: &CkksContext, ct: &Ciphertext, step: i64, keys: &EvaluationKeys) -> Result<Ciphertext> {
    require_size2(ct)?;
    let s = normalize_step(ctx, step);
    if s == 0 {
        return Ok(ct.clone());
    }
    let key = keys
        .galois
        .get(&s)
        .ok_or_else(|| CkksError::MissingKey(format!("galois key for step {s}")))?;
    Ok(apply_galois(ctx, ct, s, key))
}

/// Rotation by `step`, using the direct key when present and otherwise a
/// product of power-of-two rotations.
pub fn rotate_any(ctx: &CkksContext, ct: &Ciphertext, step: i64, keys: &EvaluationKeys) -> Result<Ciphertext> {
    let s = normalize_step(ctx, step);
    if s == 0 || keys.galois.contains_key(&s) {
        return rotate(ctx, ct, s as i64, keys);
    }
    let parts: Vec<usize> = (0..usize::BITS).map(|b| 1usize << b).filter(|&p| s & p != 0).collect();
    if let Some(&missing) = parts.iter().find(|p| !keys.galois.contains_key(p)) {
        return Err(CkksError::MissingKey(format!(
            "galois key for step {s} (composition needs step {missing})"
        )));
    }
    let mut out = ct.clone();
    for p in parts {
        out = rotate(ctx, &out, p as i64, keys)?;
    }
    Ok(out)
}
