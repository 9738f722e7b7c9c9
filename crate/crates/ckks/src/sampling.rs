use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::ntt::NttTable;
use crate::poly::{Form, RingPoly};

/// Standard deviation of the RLWE error distribution.
pub const ERROR_STD_DEV: f64 = 3.2;

/// Hamming weight of ternary secrets and encryption masks.
pub const HAMMING_WEIGHT: usize = 64;

/// Ternary vector with exactly `min(weight, n / 2)` non-zero entries.
pub fn ternary_fixed_weight<R: Rng + ?Sized>(n: usize, weight: usize, rng: &mut R) -> Vec<i64> {
    let h = weight.min(n / 2);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut out = vec![0i64; n];
    for i in 0..h {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
        out[idx[i]] = if rng.gen::<bool>() { 1 } else { -1 };
    }
    out
}

/// Rounded normal samples, clipped at six standard deviations.
pub fn gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    let normal = Normal::new(0.0, ERROR_STD_DEV).expect("valid standard deviation");
    let bound = (6.0 * ERROR_STD_DEV).round();
    (0..n)
        .map(|_| normal.sample(rng).round().clamp(-bound, bound) as i64)
        .collect()
}

/// Uniform element of the ring, drawn directly in NTT form.
pub fn uniform_ntt<R: Rng + ?Sized>(n: usize, basis: &[&NttTable], rng: &mut R) -> RingPoly {
    let comps = basis
        .iter()
        .map(|t| {
            let q = t.modulus().value();
            (0..n).map(|_| rng.gen_range(0..q)).collect()
        })
        .collect();
    RingPoly {
        comps,
        form: Form::Ntt,
    }
}

/// Small signed polynomial lifted to `basis` and moved to NTT form.
pub fn small_ntt(coeffs: &[i64], basis: &[&NttTable]) -> RingPoly {
    let mut p = RingPoly::from_signed(coeffs, basis);
    p.to_ntt(basis);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn fixed_weight_ternary() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let s = ternary_fixed_weight(8192, HAMMING_WEIGHT, &mut rng);
        assert_eq!(s.iter().filter(|&&x| x != 0).count(), HAMMING_WEIGHT);
        assert!(s.iter().all(|&x| (-1..=1).contains(&x)));
        let small = ternary_fixed_weight(8, HAMMING_WEIGHT, &mut rng);
        assert_eq!(small.iter().filter(|&&x| x != 0).count(), 4);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let e = gaussian(100_000, &mut rng);
        let mean = e.iter().sum::<i64>() as f64 / e.len() as f64;
        let var = e.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / e.len() as f64;
        assert!(mean.abs() < 0.05);
        // rounding adds 1/12 to the variance
        assert!((var.sqrt() - (ERROR_STD_DEV.powi(2) + 1.0 / 12.0).sqrt()).abs() < 0.05);
        assert!(e.iter().all(|x| x.abs() <= 19));
    }
}
