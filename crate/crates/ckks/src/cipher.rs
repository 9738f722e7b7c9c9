use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::context::CkksContext;
use crate::error::{CkksError, Result};
use crate::keys::{PublicKey, SecretKey};
use crate::poly::{Form, RingPoly};
use crate::real::Real;
use crate::sampling::{gaussian, small_ntt, ternary_fixed_weight, HAMMING_WEIGHT};

/// Largest magnitude a scaled coefficient may take before encoding.
const MAX_SCALED_COEFF: f64 = 1.329_227_995_784_916e36; // 2^120

/// Encoded message. The polynomial is kept in NTT form.
#[derive(Clone, Debug, PartialEq)]
pub struct Plaintext {
    pub(crate) poly: RingPoly,
    pub(crate) scale: f64,
    pub(crate) level: usize,
}

impl Plaintext {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn poly(&self) -> &RingPoly {
        &self.poly
    }
}

/// RLWE ciphertext `(c0, c1[, c2])`, decrypting as `sum c_i s^i`.
/// Polynomials are kept in NTT form over `level + 1` primes.
#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    pub(crate) polys: Vec<RingPoly>,
    pub(crate) scale: f64,
    pub(crate) level: usize,
}

impl Ciphertext {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn size(&self) -> usize {
        self.polys.len()
    }

    pub fn active_primes(&self) -> usize {
        self.level + 1
    }

    pub fn polys(&self) -> &[RingPoly] {
        &self.polys
    }
}

fn check_level(ctx: &CkksContext, level: usize) -> Result<()> {
    if level > ctx.max_level() {
        return Err(CkksError::Parameter(format!(
            "level {level} exceeds maximum {}",
            ctx.max_level()
        )));
    }
    Ok(())
}

/// Encodes up to N/2 reals into slots at the given level and scale.
pub fn encode<T: Real>(ctx: &CkksContext, values: &[T], level: usize, scale: f64) -> Result<Plaintext> {
    if values.len() > ctx.slot_count() {
        return Err(CkksError::Capacity {
            len: values.len(),
            slots: ctx.slot_count(),
        });
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(CkksError::Parameter(format!("invalid scale {scale}")));
    }
    check_level(ctx, level)?;
    let vals: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(CkksError::Overflow("non-finite slot value".into()));
    }
    let coeffs = ctx.encoder().slots_to_coeffs(&vals);
    let mut scaled = Vec::with_capacity(coeffs.len());
    for c in coeffs {
        let x = (c * scale).round();
        if !(x.abs() < MAX_SCALED_COEFF) {
            return Err(CkksError::Overflow(format!("scaled coefficient {x:e}")));
        }
        scaled.push(x as i128);
    }
    let basis = ctx.basis(level);
    let comps = basis
        .iter()
        .map(|t| scaled.iter().map(|&x| t.modulus().from_i128(x)).collect())
        .collect();
    let mut poly = RingPoly {
        comps,
        form: Form::Coefficient,
    };
    poly.to_ntt(&basis);
    Ok(Plaintext { poly, scale, level })
}

/// Encodes the same real into every slot: the constant polynomial `round(x * scale)`.
pub fn encode_constant(ctx: &CkksContext, value: f64, level: usize, scale: f64) -> Result<Plaintext> {
    check_level(ctx, level)?;
    let x = (value * scale).round();
    if !(x.abs() < MAX_SCALED_COEFF) {
        return Err(CkksError::Overflow(format!("scaled constant {x:e}")));
    }
    let basis = ctx.basis(level);
    let n = ctx.poly_degree();
    let comps = basis
        .iter()
        .map(|t| {
            let mut c = vec![0u64; n];
            c[0] = t.modulus().from_i128(x as i128);
            c
        })
        .collect();
    let mut poly = RingPoly {
        comps,
        form: Form::Coefficient,
    };
    poly.to_ntt(&basis);
    Ok(Plaintext { poly, scale, level })
}

/// Decodes all N/2 slots (real parts).
pub fn decode(ctx: &CkksContext, pt: &Plaintext) -> Result<Vec<f64>> {
    check_level(ctx, pt.level)?;
    let basis = ctx.basis(pt.level);
    let mut poly = pt.poly.clone();
    poly.to_coeff(&basis);
    let n = ctx.poly_degree();
    let mut residues = vec![0u64; pt.level + 1];
    let mut digits = Vec::with_capacity(pt.level + 1);
    let coeffs: Vec<f64> = (0..n)
        .map(|i| {
            for (r, c) in residues.iter_mut().zip(&poly.comps) {
                *r = c[i];
            }
            ctx.crt_centered(&residues, &mut digits) / pt.scale
        })
        .collect();
    Ok(ctx.encoder().coeffs_to_slots(&coeffs).into_iter().map(|z| z.re).collect())
}

/// Public-key encryption; deterministic in `seed`.
pub fn encrypt(ctx: &CkksContext, pk: &PublicKey, pt: &Plaintext, seed: u64) -> Result<Ciphertext> {
    check_level(ctx, pt.level)?;
    let n = ctx.poly_degree();
    let basis = ctx.basis(pt.level);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let v = small_ntt(&ternary_fixed_weight(n, HAMMING_WEIGHT, &mut rng), &basis);
    let e0 = small_ntt(&gaussian(n, &mut rng), &basis);
    let e1 = small_ntt(&gaussian(n, &mut rng), &basis);
    // zip truncation restricts the full-chain key to the active primes
    let mut c0 = v.mul(&pk.b, &basis);
    c0.add_assign(&e0, &basis);
    c0.add_assign(&pt.poly, &basis);
    let mut c1 = v.mul(&pk.a, &basis);
    c1.add_assign(&e1, &basis);
    Ok(Ciphertext {
        polys: vec![c0, c1],
        scale: pt.scale,
        level: pt.level,
    })
}

pub fn decrypt(ctx: &CkksContext, sk: &SecretKey, ct: &Ciphertext) -> Result<Plaintext> {
    if ct.size() != 2 {
        return Err(CkksError::State(format!(
            "cannot decrypt a size-{} ciphertext; relinearize first",
            ct.size()
        )));
    }
    check_level(ctx, ct.level)?;
    let basis = ctx.basis(ct.level);
    let s = sk.ntt_at(ctx, ct.level);
    let mut m = ct.polys[1].mul(&s, &basis);
    m.add_assign(&ct.polys[0], &basis);
    Ok(Plaintext {
        poly: m,
        scale: ct.scale,
        level: ct.level,
    })
}
