//! Canonical-embedding encoder: maps N/2 complex slots to the real
//! coefficients of a polynomial whose evaluations at `ζ^(5^j)` are the slot
//! values, with `ζ = exp(iπ/N)`. Slot order follows the powers of 5, so the
//! automorphism `X -> X^(5^k)` rotates slots left by `k`.

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct SlotEncoder {
    slots: usize,
    two_n: usize,
    rot_group: Vec<usize>,
    ksi: Vec<Complex64>,
}

fn bit_reverse_permute<T>(vals: &mut [T]) {
    let n = vals.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            vals.swap(i, j);
        }
    }
}

impl SlotEncoder {
    pub fn new(poly_degree: usize) -> Self {
        let slots = poly_degree / 2;
        let two_n = 2 * poly_degree;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = (g * 5) % two_n;
        }
        let ksi = (0..=two_n)
            .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / two_n as f64))
            .collect();
        Self {
            slots,
            two_n,
            rot_group,
            ksi,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Galois element `5^k mod 2N` realising a left rotation by `k` slots.
    pub fn galois_element(&self, step: usize) -> usize {
        self.rot_group[step % self.slots]
    }

    /// Slots -> coefficient-side values (evaluation map inverse).
    fn embed_inv(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let mut len = size;
        while len >= 1 {
            let half = len >> 1;
            let lenq = len << 2;
            let gap = self.two_n / lenq;
            for i in (0..size).step_by(len.max(1)) {
                for j in 0..half {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * gap;
                    let u = vals[i + j] + vals[i + j + half];
                    let v = (vals[i + j] - vals[i + j + half]) * self.ksi[idx];
                    vals[i + j] = u;
                    vals[i + j + half] = v;
                }
            }
            len >>= 1;
        }
        bit_reverse_permute(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Coefficient-side values -> slots.
    fn embed(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        bit_reverse_permute(vals);
        let mut len = 2;
        while len <= size {
            let half = len >> 1;
            let lenq = len << 2;
            let gap = self.two_n / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..half {
                    let idx = (self.rot_group[j] % lenq) * gap;
                    let u = vals[i + j];
                    let v = vals[i + j + half] * self.ksi[idx];
                    vals[i + j] = u + v;
                    vals[i + j + half] = u - v;
                }
            }
            len <<= 1;
        }
    }

    /// Real slot values (zero-padded to N/2) to unscaled real coefficients.
    pub fn slots_to_coeffs(&self, values: &[f64]) -> Vec<f64> {
        debug_assert!(values.len() <= self.slots);
        let mut vals = vec![Complex64::new(0.0, 0.0); self.slots];
        for (v, &x) in vals.iter_mut().zip(values) {
            *v = Complex64::new(x, 0.0);
        }
        self.embed_inv(&mut vals);
        let mut coeffs = vec![0.0; 2 * self.slots];
        for (i, v) in vals.iter().enumerate() {
            coeffs[i] = v.re;
            coeffs[i + self.slots] = v.im;
        }
        coeffs
    }

    pub fn coeffs_to_slots(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let mut vals: Vec<Complex64> = (0..self.slots)
            .map(|i| Complex64::new(coeffs[i], coeffs[i + self.slots]))
            .collect();
        self.embed(&mut vals);
        vals
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the polynomial at `ζ^(5^j)`.
    fn evaluate_naive(coeffs: &[f64], j: usize) -> Complex64 {
        let n = coeffs.len();
        let two_n = 2 * n;
        let mut g = 1usize;
        for _ in 0..j {
            g = (g * 5) % two_n;
        }
        coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let angle = PI * ((k * g) % two_n) as f64 / n as f64;
                Complex64::from_polar(c, angle)
            })
            .sum()
    }

    #[test]
    fn encoding_matches_direct_evaluation() {
        for n in [8usize, 64, 512] {
            let enc = SlotEncoder::new(n);
            let values: Vec<f64> = (0..n / 2).map(|i| (i as f64 * 0.37).sin()).collect();
            let coeffs = enc.slots_to_coeffs(&values);
            for (j, &v) in values.iter().enumerate() {
                let z = evaluate_naive(&coeffs, j);
                assert!((z.re - v).abs() < 1e-9, "n={n} slot {j}: {z} vs {v}");
                assert!(z.im.abs() < 1e-9);
            }
            let back = enc.coeffs_to_slots(&coeffs);
            for (z, &v) in back.iter().zip(&values) {
                assert!((z.re - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn automorphism_rotates_left() {
        let n = 16;
        let enc = SlotEncoder::new(n);
        let values: Vec<f64> = (0..n / 2).map(|i| i as f64 + 1.0).collect();
        let coeffs = enc.slots_to_coeffs(&values);
        let g = enc.galois_element(1);
        let mut rotated = vec![0.0; n];
        for (i, &c) in coeffs.iter().enumerate() {
            let k = (i * g) % (2 * n);
            if k < n {
                rotated[k] = c;
            } else {
                rotated[k - n] = -c;
            }
        }
        let slots = enc.coeffs_to_slots(&rotated);
        for (j, z) in slots.iter().enumerate() {
            assert!((z.re - values[(j + 1) % (n / 2)]).abs() < 1e-9);
        }
    }
}
