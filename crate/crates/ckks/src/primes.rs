use crate::arith::Modulus;
use crate::error::{CkksError, Result};

/// An NTT-friendly prime `q ≡ 1 (mod 2N)` together with a primitive 2N-th
/// root of unity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimeModulus {
    pub modulus: Modulus,
    pub bit_length: u32,
    pub root: u64,
}

impl PrimeModulus {
    pub fn value(&self) -> u64 {
        self.modulus.value()
    }

    /// Rebuilds a prime from its value, validating the root-of-unity invariant.
    pub fn from_parts(q: u64, root: u64, poly_degree: usize) -> Result<Self> {
        if !(3..1 << 62).contains(&q) || !is_prime(q) {
            return Err(CkksError::Parameter(format!("{q} is not a supported prime")));
        }
        let two_n = 2 * poly_degree as u64;
        let modulus = Modulus::new(q);
        if (q - 1) % two_n != 0
            || modulus.pow(root, poly_degree as u64) != q - 1
            || modulus.pow(root, two_n) != 1
        {
            return Err(CkksError::Parameter(format!(
                "{root} is not a primitive {two_n}-th root of unity mod {q}"
            )));
        }
        Ok(Self {
            bit_length: modulus.bits(),
            modulus,
            root,
        })
    }
}

const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Deterministic Miller–Rabin, exact for every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in WITNESSES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Picks, for each requested bit length, the largest prime below `2^b`
/// with exactly `b` bits and `q ≡ 1 (mod 2N)`, skipping primes already
/// chosen for an earlier slot.
pub fn find_primes(bit_lengths: &[u32], poly_degree: usize) -> Result<Vec<PrimeModulus>> {
    find_primes_excluding(bit_lengths, poly_degree, &[])
}

pub(crate) fn find_primes_excluding(
    bit_lengths: &[u32],
    poly_degree: usize,
    exclude: &[u64],
) -> Result<Vec<PrimeModulus>> {
    if !poly_degree.is_power_of_two() || poly_degree < 2 {
        return Err(CkksError::Parameter(format!(
            "polynomial degree {poly_degree} is not a power of two"
        )));
    }
    let two_n = 2 * poly_degree as u64;
    let mut chosen: Vec<PrimeModulus> = Vec::with_capacity(bit_lengths.len());
    for &bits in bit_lengths {
        if !(20..=60).contains(&bits) {
            return Err(CkksError::Parameter(format!(
                "prime bit length {bits} outside [20, 60]"
            )));
        }
        let lower = 1u64 << (bits - 1);
        let upper = 1u64 << bits;
        let mut candidate = ((upper - 1) / two_n) * two_n + 1;
        let found = loop {
            if candidate < lower || candidate >= upper {
                break None;
            }
            let taken = exclude.contains(&candidate) || chosen.iter().any(|p| p.value() == candidate);
            if !taken && is_prime(candidate) {
                break Some(candidate);
            }
            match candidate.checked_sub(two_n) {
                Some(c) => candidate = c,
                None => break None,
            }
        };
        let q = found.ok_or_else(|| {
            CkksError::Parameter(format!(
                "no {bits}-bit prime congruent to 1 mod {two_n}"
            ))
        })?;
        let modulus = Modulus::new(q);
        let root = primitive_root_2n(&modulus, poly_degree as u64);
        chosen.push(PrimeModulus {
            modulus,
            bit_length: bits,
            root,
        });
    }
    Ok(chosen)
}

/// Smallest-base primitive 2N-th root: `g = x^((q-1)/2N)` for the first `x`
/// giving `g^N = -1`.
fn primitive_root_2n(m: &Modulus, n: u64) -> u64 {
    let q = m.value();
    let exp = (q - 1) / (2 * n);
    (2..q)
        .map(|x| m.pow(x, exp))
        .find(|&g| m.pow(g, n) == q - 1)
        .expect("a prime congruent to 1 mod 2N has a primitive 2N-th root")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_division(n: u64) -> bool {
        if n < 2 {
            return false;
        }
        let mut d = 2;
        while d * d <= n {
            if n % d == 0 {
                return false;
            }
            d += 1;
        }
        true
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
        assert!(is_prime((1 << 61) - 1));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2, 3, 5, 7
    }

    #[test]
    fn single_31_bit_prime_for_degree_8() {
        let primes = find_primes(&[31], 8).unwrap();
        // sieve oracle: scan downward over 31-bit integers ≡ 1 mod 16
        let expected = (1u64 << 30..1u64 << 31)
            .rev()
            .find(|&n| n % 16 == 1 && trial_division(n))
            .unwrap();
        assert_eq!(primes[0].value(), expected);
        assert_eq!(primes[0].bit_length, 31);
    }

    #[test]
    fn chain_88_bits_at_degree_8192() {
        let primes = find_primes(&[31, 26, 31], 8192).unwrap();
        let oracle = |bits: u32| {
            (0..(1u64 << bits) / 16384)
                .rev()
                .map(|k| k * 16384 + 1)
                .filter(|&n| n >= 1 << (bits - 1) && trial_division(n))
                .take(2)
                .collect::<Vec<_>>()
        };
        let p31 = oracle(31);
        let p26 = oracle(26);
        let values: Vec<u64> = primes.iter().map(|p| p.value()).collect();
        assert_eq!(values, vec![p31[0], p26[0], p31[1]]);
        for p in &primes {
            assert_eq!(p.value() % 16384, 1);
            assert_eq!(64 - p.value().leading_zeros(), p.bit_length);
            let m = &p.modulus;
            assert_eq!(m.pow(p.root, 8192), p.value() - 1);
            assert_eq!(m.pow(p.root, 16384), 1);
        }
    }

    #[test]
    fn too_few_bits_for_degree() {
        assert!(matches!(find_primes(&[5], 8192), Err(CkksError::Parameter(_))));
        assert!(matches!(find_primes(&[20], 8192 * 64), Err(CkksError::Parameter(_))));
    }

    #[test]
    fn from_parts_validates_root() {
        let p = find_primes(&[30], 16).unwrap().remove(0);
        assert!(PrimeModulus::from_parts(p.value(), p.root, 16).is_ok());
        assert!(PrimeModulus::from_parts(p.value(), 1, 16).is_err());
        assert!(PrimeModulus::from_parts(p.value() + 2, p.root, 16).is_err());
    }
}
