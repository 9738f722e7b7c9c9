//! Oracle suites for the HE layer, shared by the CLI and the acceptance run.

use duetlite_ckks::eval::{add, mul, mul_plain, rescale, rotate};
use duetlite_ckks::ntt::{negacyclic_schoolbook, NttTable};
use duetlite_ckks::{decode, decrypt, encode, encrypt, keygen, CkksContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::model::chain_for_depth;

pub type Check = std::result::Result<String, String>;

pub const ORACLE_TOLERANCE: f64 = 1e-2;
const ROTATIONS: [i64; 4] = [1, 7, -5, 64];

/// Per-operation worst absolute error of decrypt(op(E(a), E(b))) against
/// the plaintext op, for `vectors` random pairs in `[-1, 1]^len`.
pub fn he_oracle(poly_degree: usize, vectors: usize, len: usize, seed: u64) -> Result<[(&'static str, f64); 4], String> {
    let s = |e: duetlite_ckks::CkksError| e.to_string();
    let ctx = CkksContext::new(poly_degree, &chain_for_depth(1), 26).map_err(s)?;
    let keys = keygen(&ctx, &ROTATIONS, seed).map_err(s)?;
    let slots = ctx.slot_count();
    if len > slots {
        return Err(format!("{len} values do not fit {slots} slots"));
    }
    let top = ctx.max_level();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst = [("add", 0.0f64), ("mul_plain+rescale", 0.0), ("mul+relin+rescale", 0.0), ("rotate", 0.0)];
    let dec = |ct: &duetlite_ckks::Ciphertext| -> Result<Vec<f64>, String> {
        decode(&ctx, &decrypt(&ctx, &keys.secret, ct).map_err(s)?).map_err(s)
    };
    let err = |got: &[f64], want: &dyn Fn(usize) -> f64| (0..slots).map(|i| (got[i] - want(i)).abs()).fold(0.0, f64::max);
    for t in 0..vectors {
        let a: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let b: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let pa = encode(&ctx, &a, top, ctx.scale()).map_err(s)?;
        let pb = encode(&ctx, &b, top, ctx.scale()).map_err(s)?;
        let ea = encrypt(&ctx, keys.public(), &pa, rng.gen()).map_err(s)?;
        let eb = encrypt(&ctx, keys.public(), &pb, rng.gen()).map_err(s)?;

        let sum = dec(&add(&ctx, &ea, &eb).map_err(s)?)?;
        worst[0].1 = worst[0].1.max(err(&sum, &|i| at(&a, i) + at(&b, i)));

        let pm = rescale(&ctx, &mul_plain(&ctx, &ea, &pb).map_err(s)?).map_err(s)?;
        worst[1].1 = worst[1].1.max(err(&dec(&pm)?, &|i| at(&a, i) * at(&b, i)));

        let cm = rescale(&ctx, &mul(&ctx, &ea, &eb, &keys.eval).map_err(s)?).map_err(s)?;
        worst[2].1 = worst[2].1.max(err(&dec(&cm)?, &|i| at(&a, i) * at(&b, i)));

        let step = ROTATIONS[t % ROTATIONS.len()];
        let rot = dec(&rotate(&ctx, &ea, step, &keys.eval).map_err(s)?)?;
        let shift = |i: usize| (i as i64 + step).rem_euclid(slots as i64) as usize;
        worst[3].1 = worst[3].1.max(err(&rot, &|i| at(&a, shift(i))));
    }
    Ok(worst)
}

pub fn he_oracle_check(poly_degree: usize, vectors: usize, seed: u64) -> Check {
    let worst = he_oracle(poly_degree, vectors, 128, seed)?;
    let summary = worst.iter().map(|(op, e)| format!("{op} {e:.2e}")).collect::<Vec<_>>().join(", ");
    if worst.iter().all(|(_, e)| *e <= ORACLE_TOLERANCE) {
        Ok(format!("{vectors} vectors at N={poly_degree}: {summary}"))
    } else {
        Err(format!("tolerance {ORACLE_TOLERANCE} exceeded: {summary}"))
    }
}

fn random_poly(rng: &mut ChaCha20Rng, t: &NttTable) -> Vec<u64> {
    let q = t.modulus().value();
    (0..t.degree()).map(|_| rng.gen_range(0..q)).collect()
}

/// inverse(forward(a)) == a for every chain prime of each degree.
pub fn ntt_roundtrip(degrees: &[usize], trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut checked = 0;
    for &n in degrees {
        let ctx = CkksContext::new(n, &[31, 26, 31], 26).map_err(|e| e.to_string())?;
        for i in 0..ctx.chain().len() {
            let t = ctx.table(i);
            for _ in 0..trials {
                let a = random_poly(&mut rng, t);
                let mut b = a.clone();
                t.forward(&mut b);
                t.inverse(&mut b);
                if a != b {
                    return Err(format!("roundtrip differs at N={n}, prime {i}"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} polynomials over N in {degrees:?} round-trip exactly"))
}

/// NTT-domain product equals the O(N^2) negacyclic convolution.
pub fn ntt_schoolbook(n: usize, pairs: usize, seed: u64) -> Check {
    let ctx = CkksContext::new(n, &[31, 26], 26).map_err(|e| e.to_string())?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for k in 0..pairs {
        let t = ctx.table(k % 2);
        let m = t.modulus();
        let (a, b) = (random_poly(&mut rng, t), random_poly(&mut rng, t));
        let (mut fa, mut fb) = (a.clone(), b.clone());
        t.forward(&mut fa);
        t.forward(&mut fb);
        let mut prod: Vec<u64> = fa.iter().zip(&fb).map(|(&x, &y)| m.mul(x, y)).collect();
        t.inverse(&mut prod);
        if prod != negacyclic_schoolbook(&a, &b, m) {
            return Err(format!("pair {k} differs from schoolbook at N={n}"));
        }
    }
    Ok(format!("{pairs} random pairs at N={n} equal the schoolbook product"))
}

/// Node protocol suites followed by the HE suites. `scale` shrinks trial
/// counts for quick runs.
pub fn run_all(scale: f64, poly_degree: usize) -> Vec<(&'static str, Check)> {
    let n = |full: usize| ((full as f64 * scale).ceil() as usize).max(1);
    let mut out = duetlite_node::selftest::run_all(scale);
    out.push(("ntt roundtrip", ntt_roundtrip(&[8, 1024, 8192], n(20), 11)));
    out.push(("ntt vs schoolbook", ntt_schoolbook(8, n(1000), 12)));
    out.push(("he oracle", he_oracle_check(poly_degree, n(1000), 13)));
    out
}
