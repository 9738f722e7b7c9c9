use crate::ntt::NttTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    Coefficient,
    Ntt,
}

/// A ring element in RNS form: one residue array of length N per prime.
///
/// The prime basis is implicit. Ciphertext polynomials use the first
/// `level + 1` chain primes; key-switching polynomials append the special
/// prime as their last component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingPoly {
    pub(crate) comps: Vec<Vec<u64>>,
    pub(crate) form: Form,
}

impl RingPoly {
    pub fn zero(n: usize, components: usize, form: Form) -> Self {
        Self {
            comps: vec![vec![0u64; n]; components],
            form,
        }
    }

    /// Lifts small signed coefficients into every prime of `basis`.
    pub fn from_signed(coeffs: &[i64], basis: &[&NttTable]) -> Self {
        let comps = basis
            .iter()
            .map(|t| coeffs.iter().map(|&c| t.modulus().from_i64(c)).collect())
            .collect();
        Self {
            comps,
            form: Form::Coefficient,
        }
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn components(&self) -> &[Vec<u64>] {
        &self.comps
    }

    pub fn component_count(&self) -> usize {
        self.comps.len()
    }

    pub fn degree(&self) -> usize {
        self.comps.first().map_or(0, Vec::len)
    }

    pub fn to_ntt(&mut self, basis: &[&NttTable]) {
        if self.form == Form::Coefficient {
            for (c, t) in self.comps.iter_mut().zip(basis) {
                t.forward(c);
            }
            self.form = Form::Ntt;
        }
    }

    pub fn to_coeff(&mut self, basis: &[&NttTable]) {
        if self.form == Form::Ntt {
            for (c, t) in self.comps.iter_mut().zip(basis) {
                t.inverse(c);
            }
            self.form = Form::Coefficient;
        }
    }

    /// Keeps the first `count` components.
    pub fn truncate(&mut self, count: usize) {
        self.comps.truncate(count);
    }

    /// Copy restricted to the given component indices.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            comps: indices.iter().map(|&i| self.comps[i].clone()).collect(),
            form: self.form,
        }
    }

    pub fn add_assign(&mut self, other: &Self, basis: &[&NttTable]) {
        debug_assert_eq!(self.form, other.form);
        for ((a, b), t) in self.comps.iter_mut().zip(&other.comps).zip(basis) {
            let m = t.modulus();
            for (x, &y) in a.iter_mut().zip(b) {
                *x = m.add(*x, y);
            }
        }
    }

    pub fn sub_assign(&mut self, other: &Self, basis: &[&NttTable]) {
        debug_assert_eq!(self.form, other.form);
        for ((a, b), t) in self.comps.iter_mut().zip(&other.comps).zip(basis) {
            let m = t.modulus();
            for (x, &y) in a.iter_mut().zip(b) {
                *x = m.sub(*x, y);
            }
        }
    }

    pub fn neg_assign(&mut self, basis: &[&NttTable]) {
        for (a, t) in self.comps.iter_mut().zip(basis) {
            let m = t.modulus();
            for x in a.iter_mut() {
                *x = m.neg(*x);
            }
        }
    }

    /// Pointwise product; both operands must be in NTT form.
    pub fn mul(&self, other: &Self, basis: &[&NttTable]) -> Self {
        debug_assert!(self.form == Form::Ntt && other.form == Form::Ntt);
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .zip(basis)
            .map(|((a, b), t)| {
                let m = t.modulus();
                a.iter().zip(b).map(|(&x, &y)| m.mul(x, y)).collect()
            })
            .collect();
        Self {
            comps,
            form: Form::Ntt,
        }
    }

    /// `self += a * b` pointwise.
    pub fn mul_add_assign(&mut self, a: &Self, b: &Self, basis: &[&NttTable]) {
        for (((acc, x), y), t) in self.comps.iter_mut().zip(&a.comps).zip(&b.comps).zip(basis) {
            let m = t.modulus();
            for ((s, &u), &v) in acc.iter_mut().zip(x).zip(y) {
                *s = m.mul_add(u, v, *s);
            }
        }
    }

    /// Multiplies component `i` by the constant `scalars[i]`.
    pub fn mul_scalars_assign(&mut self, scalars: &[u64], basis: &[&NttTable]) {
        for ((a, &s), t) in self.comps.iter_mut().zip(scalars).zip(basis) {
            let m = t.modulus();
            let ss = m.shoup(s);
            for x in a.iter_mut() {
                *x = m.mul_shoup(*x, s, ss);
            }
        }
    }

    /// Applies `X -> X^galois` to a coefficient-form polynomial.
    pub fn automorphism(&self, galois: usize, basis: &[&NttTable]) -> Self {
        debug_assert_eq!(self.form, Form::Coefficient);
        let n = self.degree();
        let two_n = 2 * n;
        let comps = self
            .comps
            .iter()
            .zip(basis)
            .map(|(a, t)| {
                let m = t.modulus();
                let mut out = vec![0u64; n];
                for (i, &c) in a.iter().enumerate() {
                    let k = (i * galois) % two_n;
                    if k < n {
                        out[k] = c;
                    } else {
                        out[k - n] = m.neg(c);
                    }
                }
                out
            })
            .collect();
        Self {
            comps,
            form: Form::Coefficient,
        }
    }
}
