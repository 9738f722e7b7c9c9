use crate::encoding::SlotEncoder;
use crate::error::{CkksError, Result};
use crate::ntt::NttTable;
use crate::primes::{find_primes, find_primes_excluding, PrimeModulus};

/// Bit length of the auxiliary key-switching prime. It only ever appears in
/// key material and transiently inside key switching; ciphertexts never
/// carry it.
pub const SPECIAL_PRIME_BITS: u32 = 60;

/// Security target asserted from the standard parameter tables for
/// N = 8192 with log(QP) <= 218.
pub const SECURITY_BITS: u32 = 128;

/// Parameters and precomputed tables for one CKKS instance.
#[derive(Clone, Debug)]
pub struct CkksContext {
    poly_degree: usize,
    chain: Vec<PrimeModulus>,
    special: PrimeModulus,
    ntt: Vec<NttTable>,
    special_ntt: NttTable,
    scale_bits: u32,
    scale: f64,
    encoder: SlotEncoder,
    // rescale_inv[l][i] = q_l^{-1} mod q_i, i < l
    rescale_inv: Vec<Vec<u64>>,
    // P^{-1} mod q_i and P mod q_i
    special_inv: Vec<u64>,
    special_mod: Vec<u64>,
    // Garner constants: prefix_inv[i] = (q_0 ... q_{i-1})^{-1} mod q_i
    prefix_inv: Vec<u64>,
}

impl CkksContext {
    /// Generates the prime chain and all tables for ring degree `poly_degree`.
    pub fn new(poly_degree: usize, prime_bits: &[u32], scale_bits: u32) -> Result<Self> {
        if !poly_degree.is_power_of_two() || poly_degree < 8 {
            return Err(CkksError::Parameter(format!(
                "polynomial degree must be a power of two >= 8, got {poly_degree}"
            )));
        }
        if prime_bits.is_empty() {
            return Err(CkksError::Parameter("empty prime chain".into()));
        }
        if !(1..=60).contains(&scale_bits) {
            return Err(CkksError::Parameter(format!("scale bits {scale_bits} out of range")));
        }
        let chain = find_primes(prime_bits, poly_degree)?;
        let values: Vec<u64> = chain.iter().map(PrimeModulus::value).collect();
        let special = find_primes_excluding(&[SPECIAL_PRIME_BITS], poly_degree, &values)?.remove(0);
        Self::from_primes(poly_degree, chain, special, scale_bits)
    }

    /// Builds a context from explicit primes (used when decoding a persisted context).
    pub fn from_primes(
        poly_degree: usize,
        chain: Vec<PrimeModulus>,
        special: PrimeModulus,
        scale_bits: u32,
    ) -> Result<Self> {
        let mut seen: Vec<u64> = chain.iter().map(PrimeModulus::value).collect();
        seen.push(special.value());
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(CkksError::Parameter("chain primes are not distinct".into()));
        }
        if chain.len() > u8::MAX as usize {
            return Err(CkksError::Parameter("prime chain too long".into()));
        }
        let ntt: Vec<NttTable> = chain.iter().map(|p| NttTable::new(p, poly_degree)).collect();
        let special_ntt = NttTable::new(&special, poly_degree);

        let rescale_inv = (0..chain.len())
            .map(|l| {
                (0..l)
                    .map(|i| chain[i].modulus.inv(chain[l].value()))
                    .collect()
            })
            .collect();
        let special_inv = chain.iter().map(|p| p.modulus.inv(special.value())).collect();
        let special_mod = chain.iter().map(|p| p.modulus.reduce(special.value())).collect();
        let prefix_inv = (0..chain.len())
            .map(|i| {
                let m = &chain[i].modulus;
                let prod = chain[..i].iter().fold(1u64, |acc, p| m.mul(acc, m.reduce(p.value())));
                m.inv(prod)
            })
            .collect();

        Ok(Self {
            poly_degree,
            encoder: SlotEncoder::new(poly_degree),
            scale: (scale_bits as f64).exp2(),
            scale_bits,
            chain,
            special,
            ntt,
            special_ntt,
            rescale_inv,
            special_inv,
            special_mod,
            prefix_inv,
        })
    }

    pub fn poly_degree(&self) -> usize {
        self.poly_degree
    }

    pub fn slot_count(&self) -> usize {
        self.poly_degree / 2
    }

    pub fn chain(&self) -> &[PrimeModulus] {
        &self.chain
    }

    pub fn special_prime(&self) -> &PrimeModulus {
        &self.special
    }

    pub fn chain_bit_lengths(&self) -> Vec<u32> {
        self.chain.iter().map(|p| p.bit_length).collect()
    }

    /// Sum of the chain's prime bit lengths (the "coefficient modulus" size).
    pub fn total_modulus_bits(&self) -> u32 {
        self.chain.iter().map(|p| p.bit_length).sum()
    }

    /// Highest ciphertext level: `chain length - 1`.
    pub fn max_level(&self) -> usize {
        self.chain.len() - 1
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    pub fn security_bits(&self) -> u32 {
        SECURITY_BITS
    }

    pub fn encoder(&self) -> &SlotEncoder {
        &self.encoder
    }

    /// NTT tables of the first `level + 1` chain primes.
    pub fn basis(&self, level: usize) -> Vec<&NttTable> {
        self.ntt[..=level].iter().collect()
    }

    /// `basis(level)` followed by the special prime.
    pub fn extended_basis(&self, level: usize) -> Vec<&NttTable> {
        let mut b = self.basis(level);
        b.push(&self.special_ntt);
        b
    }

    pub fn table(&self, index: usize) -> &NttTable {
        &self.ntt[index]
    }

    pub fn special_table(&self) -> &NttTable {
        &self.special_ntt
    }

    pub(crate) fn rescale_inverses(&self, level: usize) -> &[u64] {
        &self.rescale_inv[level]
    }

    pub(crate) fn special_inverses(&self) -> &[u64] {
        &self.special_inv
    }

    pub(crate) fn special_residues(&self) -> &[u64] {
        &self.special_mod
    }

    /// Centered CRT reconstruction of one coefficient from its residues
    /// modulo `q_0 .. q_l`, returned as a float. Uses Garner's mixed-radix
    /// form so no multiprecision integers are needed.
    pub(crate) fn crt_centered(&self, residues: &[u64], digits: &mut Vec<u64>) -> f64 {
        digits.clear();
        for (i, &r) in residues.iter().enumerate() {
            let m = &self.chain[i].modulus;
            // value of the digits so far, mod q_i (Horner from the top digit)
            let mut acc = 0u64;
            for j in (0..i).rev() {
                acc = m.mul_add(acc, m.reduce(self.chain[j].value()), m.reduce(digits[j]));
            }
            digits.push(m.mul(m.sub(r, acc), self.prefix_inv[i]));
        }
        // x <= (Q-1)/2  iff  x <= (Q-1) - x, compared digit-wise from the top
        let negative = {
            let mut neg = false;
            for i in (0..digits.len()).rev() {
                let comp = self.chain[i].value() - 1 - digits[i];
                if digits[i] != comp {
                    neg = digits[i] > comp;
                    break;
                }
            }
            neg
        };
        let eval = |digit: &dyn Fn(usize) -> u64| {
            let mut v = 0.0f64;
            for i in (0..digits.len()).rev() {
                v = v * self.chain[i].value() as f64 + digit(i) as f64;
            }
            v
        };
        if negative {
            -(eval(&|i| self.chain[i].value() - 1 - digits[i]) + 1.0)
        } else {
            eval(&|i| digits[i])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_chain_totals() {
        let c = CkksContext::new(8192, &[31, 26, 26, 26, 31], 26).unwrap();
        assert_eq!(c.total_modulus_bits(), 140);
        assert_eq!(c.max_level(), 4);
        assert_eq!(c.slot_count(), 4096);
        assert_eq!(c.scale(), (26f64).exp2());
        let c = CkksContext::new(8192, &[31, 26, 31], 26).unwrap();
        assert_eq!(c.total_modulus_bits(), 88);
    }

    #[test]
    fn desk_scale_context() {
        let c = CkksContext::new(8, &[31], 26).unwrap();
        assert_eq!(c.slot_count(), 4);
        assert_eq!(c.max_level(), 0);
        assert!(c.special_prime().value() != c.chain()[0].value());
    }

    #[test]
    fn rejects_bad_degree() {
        assert!(CkksContext::new(12, &[31], 26).is_err());
        assert!(CkksContext::new(4, &[31], 26).is_err());
        assert!(CkksContext::new(8, &[], 26).is_err());
    }

    #[test]
    fn crt_reconstructs_signed_values() {
        let c = CkksContext::new(8, &[31, 26, 31], 26).unwrap();
        let mut digits = Vec::new();
        for x in [0i128, 1, -1, 123_456_789_012_345, -98_765_432_109_876_543, 1 << 80, -(1 << 85)] {
            let residues: Vec<u64> = c.chain().iter().map(|p| p.modulus.from_i128(x)).collect();
            let got = c.crt_centered(&residues, &mut digits);
            let want = x as f64;
            assert!((got - want).abs() <= want.abs() * 1e-15, "x = {x}: {got}");
            assert_eq!(got.signum(), want.signum());
        }
    }
}
