use std::sync::OnceLock;

use duetlite_ckks::codec::{deserialize_ct, serialize_ct, serialize_keyset};
use duetlite_ckks::eval::{add, mul, mul_plain, rescale, rotate};
use duetlite_ckks::ntt::{negacyclic_schoolbook, NttTable};
use duetlite_ckks::tensor::{decrypt_vector, encrypt_vector, fc_forward, matvec_rotation_steps};
use duetlite_ckks::{decode, decrypt, encode, encrypt, keygen, CkksContext, KeySet, PlainMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const N: usize = 256;

fn fixture() -> &'static (CkksContext, KeySet) {
    static F: OnceLock<(CkksContext, KeySet)> = OnceLock::new();
    F.get_or_init(|| {
        let ctx = CkksContext::new(N, &[31, 26, 26, 31], 26).unwrap();
        let mut steps = matvec_rotation_steps(16, 32, N / 2).unwrap();
        steps.extend([2, 3, 5]);
        let keys = keygen(&ctx, &steps, 99).unwrap();
        (ctx, keys)
    })
}

fn dec(ct: &duetlite_ckks::Ciphertext) -> Vec<f64> {
    let (ctx, keys) = fixture();
    decode(ctx, &decrypt(ctx, &keys.secret, ct).unwrap()).unwrap()
}

fn enc(v: &[f64], seed: u64) -> duetlite_ckks::Ciphertext {
    let (ctx, keys) = fixture();
    let pt = encode(ctx, v, ctx.max_level(), ctx.scale()).unwrap();
    encrypt(ctx, keys.public(), &pt, seed).unwrap()
}

fn max_err(got: &[f64], want: &[f64]) -> f64 {
    got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn unit_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn addition_matches_plaintext(a in unit_vec(128), b in unit_vec(128), seed in any::<u64>()) {
        let (ctx, _) = fixture();
        let got = dec(&add(ctx, &enc(&a, seed), &enc(&b, seed ^ 1)).unwrap());
        let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert!(max_err(&got, &want) <= 1e-2);
    }

    #[test]
    fn plain_product_matches_plaintext(a in unit_vec(128), b in unit_vec(128), seed in any::<u64>()) {
        let (ctx, _) = fixture();
        let ct = enc(&a, seed);
        let pt = encode(ctx, &b, ct.level(), ctx.scale()).unwrap();
        let r = rescale(ctx, &mul_plain(ctx, &ct, &pt).unwrap()).unwrap();
        let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        prop_assert!(max_err(&dec(&r), &want) <= 1e-2);
    }

    #[test]
    fn cipher_product_matches_plaintext(a in unit_vec(128), b in unit_vec(128), seed in any::<u64>()) {
        let (ctx, keys) = fixture();
        let r = rescale(ctx, &mul(ctx, &enc(&a, seed), &enc(&b, seed ^ 2), &keys.eval).unwrap()).unwrap();
        let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        prop_assert!(max_err(&dec(&r), &want) <= 1e-2);
    }

    #[test]
    fn rotation_matches_plaintext(a in unit_vec(128), step in prop::sample::select(vec![1i64, 2, 3, 5, 0]), seed in any::<u64>()) {
        let (ctx, keys) = fixture();
        let got = dec(&rotate(ctx, &enc(&a, seed), step, &keys.eval).unwrap());
        let want: Vec<f64> = (0..128).map(|i| a[(i + step as usize) % 128]).collect();
        prop_assert!(max_err(&got, &want) <= 1e-2);
    }

    #[test]
    fn level_accounting(k in 1usize..=3, seed in any::<u64>()) {
        let (ctx, _) = fixture();
        let mut ct = enc(&[0.5], seed);
        let start = ct.active_primes();
        for _ in 0..k {
            let lvl = ct.level();
            let q = ctx.table(lvl).modulus().value() as f64;
            let pt = duetlite_ckks::encode_constant(ctx, 1.0, lvl, q * ctx.scale() / ct.scale()).unwrap();
            ct = rescale(ctx, &mul_plain(ctx, &ct, &pt).unwrap()).unwrap();
        }
        prop_assert_eq!(ct.active_primes(), start - k);
        let other = enc(&[0.5], seed ^ 3);
        prop_assert!(add(ctx, &ct, &other).is_err());
    }

    #[test]
    fn serialization_is_idempotent(a in unit_vec(16), seed in any::<u64>()) {
        let (ctx, _) = fixture();
        let ct = enc(&a, seed);
        let bytes = serialize_ct(ctx, &ct);
        let again = serialize_ct(ctx, &deserialize_ct(ctx, &bytes).unwrap());
        prop_assert_eq!(&bytes, &again);
        prop_assert_eq!(bytes, serialize_ct(ctx, &enc(&a, seed)));
    }

    #[test]
    fn fc_linearity(v in unit_vec(32), seed in any::<u64>()) {
        let (ctx, keys) = fixture();
        let w = PlainMatrix::from_fn(16, 32, |r, c| (((r * 31 + c * 17) % 29) as f64 / 14.5) - 1.0).unwrap();
        let b: Vec<f64> = (0..16).map(|i| (i as f64 - 8.0) / 16.0).collect();
        let run = |alpha: f64| {
            let x: Vec<f64> = v.iter().map(|t| t * alpha).collect();
            let cv = encrypt_vector(ctx, keys.public(), &x, seed).unwrap();
            decrypt_vector(ctx, &keys.secret, &fc_forward(ctx, &cv, &w, &b, &keys.eval).unwrap()).unwrap()
        };
        let base = run(1.0);
        for alpha in [0.0, 2.0] {
            let got = run(alpha);
            let want: Vec<f64> = base.iter().zip(&b).map(|(f, bi)| alpha * f - (alpha - 1.0) * bi).collect();
            prop_assert!(max_err(&got, &want) <= 2e-2);
        }
    }
}

#[test]
fn keys_are_deterministic() {
    let (ctx, keys) = fixture();
    let again = keygen(ctx, &keys.eval.galois.keys().map(|&s| s as i64).collect::<Vec<_>>(), 99).unwrap();
    assert_eq!(serialize_keyset(ctx, keys), serialize_keyset(ctx, &again));
}

#[test]
fn ntt_product_equals_schoolbook() {
    let ctx = CkksContext::new(8, &[31, 26], 26).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for i in 0..2 {
        let t: &NttTable = ctx.table(i);
        let q = t.modulus().value();
        for _ in 0..500 {
            let a: Vec<u64> = (0..8).map(|_| rng.gen_range(0..q)).collect();
            let b: Vec<u64> = (0..8).map(|_| rng.gen_range(0..q)).collect();
            let (mut fa, mut fb) = (a.clone(), b.clone());
            t.forward(&mut fa);
            t.forward(&mut fb);
            let mut prod: Vec<u64> = fa.iter().zip(&fb).map(|(&x, &y)| t.modulus().mul(x, y)).collect();
            t.inverse(&mut prod);
            assert_eq!(prod, negacyclic_schoolbook(&a, &b, t.modulus()));
        }
    }
}

#[test]
fn wrong_secret_key_decrypts_to_noise() {
    let (ctx, _) = fixture();
    let v: Vec<f64> = (0..128).map(|i| (i as f64 / 64.0) - 1.0).collect();
    for trial in 0..100u64 {
        let other = keygen(ctx, &[], 1000 + trial).unwrap();
        let got = decode(ctx, &decrypt(ctx, &other.secret, &enc(&v, trial)).unwrap()).unwrap();
        assert!(max_err(&got, &v) >= 0.1);
    }
}
