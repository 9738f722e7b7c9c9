use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::context::CkksContext;
use crate::error::{CkksError, Result};
use crate::poly::{Form, RingPoly};
use crate::sampling::{gaussian, small_ntt, ternary_fixed_weight, uniform_ntt, HAMMING_WEIGHT};

/// Ternary secret `s`, stored by its signed coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i8>,
}

impl SecretKey {
    pub fn coefficients(&self) -> &[i8] {
        &self.coeffs
    }

    pub(crate) fn signed(&self) -> Vec<i64> {
        self.coeffs.iter().map(|&c| c as i64).collect()
    }

    /// `s` in NTT form over the first `level + 1` chain primes.
    pub(crate) fn ntt_at(&self, ctx: &CkksContext, level: usize) -> RingPoly {
        small_ntt(&self.signed(), &ctx.basis(level))
    }
}

/// RLWE pair `(b, a)` with `b = -a s + e`, NTT form over the whole chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub(crate) b: RingPoly,
    pub(crate) a: RingPoly,
}

/// Key-switching key from `s'` to `s`: one RLWE pair per chain prime, each
/// over the chain plus the special prime `P`. Digit `i` encrypts
/// `P * s'` in component `i` only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeySwitchKey {
    pub(crate) digits: Vec<(RingPoly, RingPoly)>,
}

impl KeySwitchKey {
    pub fn digit_count(&self) -> usize {
        self.digits.len()
    }
}

/// Key material that may leave the secret-key holder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluationKeys {
    pub public: PublicKey,
    pub relin: Option<KeySwitchKey>,
    /// Keyed by left-rotation step normalised into `0 .. N/2`.
    pub galois: BTreeMap<usize, KeySwitchKey>,
}

impl EvaluationKeys {
    pub fn rotation_steps(&self) -> Vec<usize> {
        self.galois.keys().copied().collect()
    }

    pub fn has_rotation(&self, ctx: &CkksContext, step: i64) -> bool {
        let s = normalize_step(ctx, step);
        s == 0 || self.galois.contains_key(&s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeySet {
    pub secret: SecretKey,
    pub eval: EvaluationKeys,
}

impl KeySet {
    pub fn public(&self) -> &PublicKey {
        &self.eval.public
    }

    pub fn relin(&self) -> Option<&KeySwitchKey> {
        self.eval.relin.as_ref()
    }

    pub fn galois(&self) -> &BTreeMap<usize, KeySwitchKey> {
        &self.eval.galois
    }
}

/// Maps a signed left-rotation step into `0 .. N/2`.
pub fn normalize_step(ctx: &CkksContext, step: i64) -> usize {
    step.rem_euclid(ctx.slot_count() as i64) as usize
}

/// Applies `X -> X^galois` to signed coefficients.
fn automorphism_signed(coeffs: &[i64], galois: usize) -> Vec<i64> {
    let n = coeffs.len();
    let mut out = vec![0i64; n];
    for (i, &c) in coeffs.iter().enumerate() {
        let k = (i * galois) % (2 * n);
        if k < n {
            out[k] = c;
        } else {
            out[k - n] = -c;
        }
    }
    out
}

fn switch_key(
    ctx: &CkksContext,
    s_ext: &RingPoly,
    target: &[i64],
    rng: &mut ChaCha20Rng,
) -> KeySwitchKey {
    let n = ctx.poly_degree();
    let top = ctx.max_level();
    let ext = ctx.extended_basis(top);
    let target_ntt = small_ntt(target, &ctx.basis(top));
    let p_mod = ctx.special_residues();
    let digits = (0..=top)
        .map(|i| {
            let a = uniform_ntt(n, &ext, rng);
            let e = small_ntt(&gaussian(n, rng), &ext);
            let mut b = a.mul(s_ext, &ext);
            b.neg_assign(&ext);
            b.add_assign(&e, &ext);
            let m = ctx.table(i).modulus();
            let ps = m.shoup(p_mod[i]);
            for (x, &t) in b.comps[i].iter_mut().zip(&target_ntt.comps[i]) {
                *x = m.add(*x, m.mul_shoup(t, p_mod[i], ps));
            }
            (b, a)
        })
        .collect();
    KeySwitchKey { digits }
}

/// Generates a secret key, public key, relinearisation key and one Galois
/// key per distinct non-zero rotation step. Deterministic in `seed`.
pub fn keygen(ctx: &CkksContext, rotation_steps: &[i64], seed: u64) -> Result<KeySet> {
    let half = ctx.slot_count() as i64;
    if let Some(&bad) = rotation_steps.iter().find(|&&s| s <= -half || s >= half) {
        return Err(CkksError::Parameter(format!(
            "rotation step {bad} outside (-{half}, {half})"
        )));
    }
    let n = ctx.poly_degree();
    let top = ctx.max_level();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let s = ternary_fixed_weight(n, HAMMING_WEIGHT, &mut rng);
    let secret = SecretKey {
        coeffs: s.iter().map(|&c| c as i8).collect(),
    };

    let basis = ctx.basis(top);
    let s_ntt = small_ntt(&s, &basis);
    let a = uniform_ntt(n, &basis, &mut rng);
    let e = small_ntt(&gaussian(n, &mut rng), &basis);
    let mut b = a.mul(&s_ntt, &basis);
    b.neg_assign(&basis);
    b.add_assign(&e, &basis);
    let public = PublicKey { b, a };

    let s_ext = small_ntt(&s, &ctx.extended_basis(top));

    let s_sq = {
        // s^2 over the integers: coefficients stay within +-HAMMING_WEIGHT
        let mut p = s_ntt.mul(&s_ntt, &basis);
        p.to_coeff(&basis);
        let m = ctx.table(0).modulus();
        p.comps[0].iter().map(|&x| m.center(x)).collect::<Vec<i64>>()
    };
    let relin = Some(switch_key(ctx, &s_ext, &s_sq, &mut rng));

    let mut steps: Vec<usize> = rotation_steps
        .iter()
        .map(|&st| normalize_step(ctx, st))
        .filter(|&st| st != 0)
        .collect();
    steps.sort_unstable();
    steps.dedup();
    let mut galois = BTreeMap::new();
    for step in steps {
        let rotated = automorphism_signed(&s, ctx.encoder().galois_element(step));
        galois.insert(step, switch_key(ctx, &s_ext, &rotated, &mut rng));
    }

    Ok(KeySet {
        secret,
        eval: EvaluationKeys {
            public,
            relin,
            galois,
        },
    })
}

/// Applies a key-switching key to `d` (coefficient form over `level + 1`
/// primes), returning `(c0, c1)` in NTT form with `c0 + c1 s ~ d s'`.
pub(crate) fn key_switch(
    ctx: &CkksContext,
    d: &RingPoly,
    level: usize,
    key: &KeySwitchKey,
) -> (RingPoly, RingPoly) {
    debug_assert_eq!(d.form, Form::Coefficient);
    let n = ctx.poly_degree();
    let k = level + 1;
    let ext = ctx.extended_basis(level);
    let key_special = ctx.max_level() + 1;
    let mut acc0 = RingPoly::zero(n, k + 1, Form::Ntt);
    let mut acc1 = RingPoly::zero(n, k + 1, Form::Ntt);
    let mut lifted = vec![0u64; n];
    for i in 0..k {
        let qi = ctx.table(i).modulus();
        let (kb, ka) = &key.digits[i];
        for (j, t) in ext.iter().enumerate() {
            let m = t.modulus();
            if j == i {
                lifted.copy_from_slice(&d.comps[i]);
            } else {
                for (l, &x) in lifted.iter_mut().zip(&d.comps[i]) {
                    *l = m.from_i64(qi.center(x));
                }
            }
            t.forward(&mut lifted);
            let kj = if j < k { j } else { key_special };
            for ((a0, a1), ((&x, &u), &v)) in acc0.comps[j]
                .iter_mut()
                .zip(acc1.comps[j].iter_mut())
                .zip(lifted.iter().zip(&kb.comps[kj]).zip(&ka.comps[kj]))
            {
                *a0 = m.mul_add(x, u, *a0);
                *a1 = m.mul_add(x, v, *a1);
            }
        }
    }
    (mod_down(ctx, acc0, level), mod_down(ctx, acc1, level))
}

/// Divides an NTT-form polynomial over `q_0..q_level, P` by `P` with rounding.
fn mod_down(ctx: &CkksContext, mut acc: RingPoly, level: usize) -> RingPoly {
    let k = level + 1;
    let special = ctx.special_table();
    let pm = special.modulus();
    let mut last = acc.comps.pop().expect("special component");
    special.inverse(&mut last);
    let inv = ctx.special_inverses();
    let mut tmp = vec![0u64; last.len()];
    for j in 0..k {
        let t = ctx.table(j);
        let m = t.modulus();
        for (y, &x) in tmp.iter_mut().zip(&last) {
            *y = m.from_i64(pm.center(x));
        }
        t.forward(&mut tmp);
        let w = inv[j];
        let ws = m.shoup(w);
        for (a, &y) in acc.comps[j].iter_mut().zip(&tmp) {
            *a = m.mul_shoup(m.sub(*a, y), w, ws);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_ternary() {
        let ctx = CkksContext::new(64, &[31, 26, 31], 26).unwrap();
        let a = keygen(&ctx, &[1, 2, 4], 9).unwrap();
        let b = keygen(&ctx, &[1, 2, 4], 9).unwrap();
        assert_eq!(a, b);
        assert!(a.secret.coeffs.iter().all(|c| (-1..=1).contains(c)));
        assert_eq!(a.eval.rotation_steps(), vec![1, 2, 4]);
        let c = keygen(&ctx, &[], 10).unwrap();
        assert!(c.eval.galois.is_empty());
        assert_ne!(a.secret, c.secret);
    }

    #[test]
    fn negative_steps_normalise() {
        let ctx = CkksContext::new(64, &[31, 31], 26).unwrap();
        let k = keygen(&ctx, &[-1, 31, 0], 1).unwrap();
        assert_eq!(k.eval.rotation_steps(), vec![31]);
        assert!(keygen(&ctx, &[32], 1).is_err());
        assert!(keygen(&ctx, &[-32], 1).is_err());
    }

    #[test]
    fn public_key_is_rlwe_sample() {
        let ctx = CkksContext::new(64, &[31, 26, 31], 26).unwrap();
        let k = keygen(&ctx, &[], 3).unwrap();
        let basis = ctx.basis(ctx.max_level());
        let s = k.secret.ntt_at(&ctx, ctx.max_level());
        let mut e = k.eval.public.a.mul(&s, &basis);
        e.add_assign(&k.eval.public.b, &basis);
        e.to_coeff(&basis);
        for (c, t) in e.comps.iter().zip(&basis) {
            assert!(c.iter().all(|&x| t.modulus().center(x).abs() <= 19));
        }
    }
}
