//! Word-sized modular arithmetic for primes below 2^62.
//!
//! Products are formed in 128 bits and reduced with a precomputed Barrett
//! ratio; multiplication by a fixed operand (NTT twiddles, constants) uses
//! Shoup's precomputed quotient instead.

const LOW64: u128 = u64::MAX as u128;

/// High 128 bits of the 256-bit product `a * b`.
#[inline]
fn mulhi_u128(a: u128, b: u128) -> u128 {
    let (a0, a1) = (a & LOW64, a >> 64);
    let (b0, b1) = (b & LOW64, b >> 64);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & LOW64) + (p10 & LOW64);
    p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    ratio: u128,
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value > 2 && value < (1 << 62), "modulus out of range");
        Self {
            value,
            ratio: u128::MAX / value as u128,
        }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let q = self.value as u128;
        let est = mulhi_u128(x, self.ratio);
        let mut r = x - est * q;
        while r >= q {
            r -= q;
        }
        r as u64
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            x % self.value
        }
    }

    /// Reduces a signed integer into `[0, q)`.
    #[inline]
    pub fn from_i64(&self, x: i64) -> u64 {
        if x >= 0 {
            self.reduce(x as u64)
        } else {
            let r = self.reduce(x.unsigned_abs());
            if r == 0 {
                0
            } else {
                self.value - r
            }
        }
    }

    pub fn from_i128(&self, x: i128) -> u64 {
        let r = self.reduce_u128(x.unsigned_abs());
        if x >= 0 || r == 0 {
            r
        } else {
            self.value - r
        }
    }

    /// Centered representative of `x` in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, x: u64) -> i64 {
        if x > self.value / 2 {
            x as i64 - self.value as i64
        } else {
            x as i64
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// `a * b + c`, with all operands already reduced.
    #[inline]
    pub fn mul_add(&self, a: u64, b: u64, c: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128 + c as u128)
    }

    /// Shoup quotient `floor(w * 2^64 / q)` for a fixed multiplicand `w < q`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        let mut b = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Inverse modulo a prime modulus.
    pub fn inv(&self, a: u64) -> u64 {
        let a = self.reduce(a);
        assert!(a != 0, "zero has no inverse");
        self.pow(a, self.value - 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mulhi_matches_wide_product() {
        // (2^127 + 5)(2^127 + 3) = 2^254 + 2^130 + 15
        assert_eq!(mulhi_u128((1 << 127) + 5, (1 << 127) + 3), (1 << 126) + 4);
        // (2^128 - 1)^2 = 2^256 - 2^129 + 1
        assert_eq!(mulhi_u128(u128::MAX, u128::MAX), u128::MAX - 1);
        assert_eq!(mulhi_u128(u128::MAX, 1), 0);
    }

    #[test]
    fn inverse_and_pow() {
        let m = Modulus::new(65537);
        for a in [1u64, 2, 3, 1000, 65536] {
            assert_eq!(m.mul(a, m.inv(a)), 1);
        }
        assert_eq!(m.pow(3, 65536), 1);
    }

    #[test]
    fn signed_reduction() {
        let m = Modulus::new(97);
        assert_eq!(m.from_i64(-1), 96);
        assert_eq!(m.from_i64(-97), 0);
        assert_eq!(m.from_i128(-195), 97 - 1);
        assert_eq!(m.center(96), -1);
        assert_eq!(m.center(48), 48);
    }

    proptest! {
        #[test]
        fn barrett_matches_remainder(q in 3u64..(1 << 62), a in any::<u64>(), b in any::<u64>()) {
            let m = Modulus::new(q | 1);
            let q = m.value();
            let (a, b) = (a % q, b % q);
            prop_assert_eq!(m.mul(a, b) as u128, (a as u128 * b as u128) % q as u128);
            let w = b;
            prop_assert_eq!(m.mul_shoup(a, w, m.shoup(w)), m.mul(a, w));
        }

        #[test]
        fn reduce_full_range(q in 3u64..(1 << 62), x in any::<u128>()) {
            let m = Modulus::new(q);
            prop_assert_eq!(m.reduce_u128(x) as u128, x % q as u128);
        }
    }
}
