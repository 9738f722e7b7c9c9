//! Negacyclic number-theoretic transform over `Z_q[X]/(X^N + 1)`.
//!
//! Forward is Cooley–Tukey with the 2N-th root folded into the twiddles, so
//! no separate pre-twist pass is needed; output is in bit-reversed order.
//! Inverse is Gentleman–Sande and restores natural coefficient order.

use crate::arith::Modulus;
use crate::primes::PrimeModulus;

#[derive(Clone, Debug)]
pub struct NttTable {
    n: usize,
    modulus: Modulus,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

impl NttTable {
    pub fn new(prime: &PrimeModulus, n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let m = prime.modulus.clone();
        let log_n = n.trailing_zeros();
        let psi = prime.root;
        let psi_inv = m.inv(psi);

        let mut pow = vec![1u64; n];
        let mut pow_inv = vec![1u64; n];
        for i in 1..n {
            pow[i] = m.mul(pow[i - 1], psi);
            pow_inv[i] = m.mul(pow_inv[i - 1], psi_inv);
        }
        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[i] = pow[r];
            psi_inv_rev[i] = pow_inv[r];
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| m.shoup(w)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| m.shoup(w)).collect();
        let n_inv = m.inv(n as u64);
        Self {
            n,
            n_inv_shoup: m.shoup(n_inv),
            n_inv,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            modulus: m,
        }
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus.value();
        let two_q = 2 * q;
        // lazy butterflies: values stay in [0, 4q) until the final pass
        let mut t = self.n;
        let mut groups = 1;
        while groups < self.n {
            t >>= 1;
            for i in 0..groups {
                let w = self.psi_rev[groups + i];
                let ws = self.psi_rev_shoup[groups + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let mut u = *x;
                    if u >= two_q {
                        u -= two_q;
                    }
                    let v = mul_shoup_lazy(*y, w, ws, q);
                    *x = u + v;
                    *y = u + two_q - v;
                }
            }
            groups <<= 1;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_q {
                v -= two_q;
            }
            if v >= q {
                v -= q;
            }
            *x = v;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus.value();
        let two_q = 2 * q;
        // lazy butterflies: values stay in [0, 2q) until the final pass
        let mut t = 1;
        let mut groups = self.n >> 1;
        while groups >= 1 {
            for i in 0..groups {
                let w = self.psi_inv_rev[groups + i];
                let ws = self.psi_inv_rev_shoup[groups + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let mut s = u + v;
                    if s >= two_q {
                        s -= two_q;
                    }
                    *x = s;
                    *y = mul_shoup_lazy(u + two_q - v, w, ws, q);
                }
            }
            t <<= 1;
            groups >>= 1;
        }
        for x in a.iter_mut() {
            let v = mul_shoup_lazy(*x, self.n_inv, self.n_inv_shoup, q);
            *x = if v >= q { v - q } else { v };
        }
    }
}

/// `a * w mod q` in `[0, 2q)` for any `a < 2^64`, given the Shoup quotient of `w`.
#[inline(always)]
fn mul_shoup_lazy(a: u64, w: u64, w_shoup: u64, q: u64) -> u64 {
    let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
    a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(q))
}

/// Schoolbook product in `Z_q[X]/(X^N + 1)`; quadratic, kept as a reference.
pub fn negacyclic_schoolbook(a: &[u64], b: &[u64], m: &Modulus) -> Vec<u64> {
    let n = a.len();
    let mut out = vec![0u64; n];
    for i in 0..n {
        for j in 0..n {
            let p = m.mul(a[i], b[j]);
            let k = i + j;
            if k < n {
                out[k] = m.add(out[k], p);
            } else {
                out[k - n] = m.sub(out[k - n], p);
            }
        }
    }
    out
}
