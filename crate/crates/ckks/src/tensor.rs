//! Slot-packed encrypted vectors and the three server-side layer
//! primitives: affine maps with plaintext weights, squaring and slot sums.
//!
//! Matrix-vector products use the diagonal method with baby-step/giant-step
//! rotations over a `d x d` zero-padded matrix, `d = next_pow2(max(rows, cols))`.
//! The input is replicated once with period `d` so every rotation reads
//! valid data; this needs the slots past the logical length to be zero.

use crate::cipher::{decode, decrypt, encode, encrypt, Ciphertext};
use crate::context::CkksContext;
use crate::error::{CkksError, Result};
use crate::eval::{add, add_plain, mul, mul_plain, rescale, rotate, rotate_any};
use crate::keys::{normalize_step, EvaluationKeys, PublicKey, SecretKey};
use crate::real::Real;

/// Row-major dense matrix of plaintext weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainMatrix<T: Real> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Real> PlainMatrix<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CkksError::Dimension(format!("empty matrix {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(CkksError::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CkksError::Dimension("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let values = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    /// Plaintext product `W v`.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        self.values
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(&w, &x)| w * x).sum())
            .collect()
    }

    /// Entries `W[i][(i + k) mod d]` of the zero-padded `d x d` matrix, `i < d`.
    fn diagonal(&self, d: usize, k: usize) -> Vec<f64> {
        (0..d)
            .map(|i| {
                let j = (i + k) % d;
                if i < self.rows && j < self.cols {
                    self.get(i, j).as_f64()
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Encrypted vector packed into the leading slots of one ciphertext.
#[derive(Clone, Debug, PartialEq)]
pub struct CipherVector {
    ct: Ciphertext,
    logical_len: usize,
    zero_tail: bool,
}

impl CipherVector {
    /// Wraps a ciphertext whose slots at and past `logical_len` decrypt to zero.
    pub fn from_parts(ctx: &CkksContext, ct: Ciphertext, logical_len: usize) -> Result<Self> {
        if logical_len == 0 || logical_len > ctx.slot_count() {
            return Err(CkksError::Capacity {
                len: logical_len,
                slots: ctx.slot_count(),
            });
        }
        Ok(Self {
            ct,
            logical_len,
            zero_tail: true,
        })
    }

    pub fn ciphertext(&self) -> &Ciphertext {
        &self.ct
    }

    pub fn into_ciphertext(self) -> Ciphertext {
        self.ct
    }

    pub fn logical_len(&self) -> usize {
        self.logical_len
    }

    pub fn level(&self) -> usize {
        self.ct.level()
    }

    pub fn scale(&self) -> f64 {
        self.ct.scale()
    }

    /// Whether slots past `logical_len` are known to decrypt to zero.
    pub fn has_zero_tail(&self) -> bool {
        self.zero_tail
    }
}

/// Encrypts `v` at the top level and the context's default scale.
pub fn encrypt_vector<T: Real>(ctx: &CkksContext, pk: &PublicKey, v: &[T], seed: u64) -> Result<CipherVector> {
    if v.is_empty() {
        return Err(CkksError::Dimension("empty vector".into()));
    }
    let pt = encode(ctx, v, ctx.max_level(), ctx.scale())?;
    let ct = encrypt(ctx, pk, &pt, seed)?;
    CipherVector::from_parts(ctx, ct, v.len())
}

/// Decrypts and returns the first `logical_len` slots.
pub fn decrypt_vector(ctx: &CkksContext, sk: &SecretKey, cv: &CipherVector) -> Result<Vec<f64>> {
    let mut out = decode(ctx, &decrypt(ctx, sk, &cv.ct)?)?;
    out.truncate(cv.logical_len);
    Ok(out)
}

/// Shape of the rotation schedule for one matrix-vector product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatVecPlan {
    /// Padded dimension.
    pub dim: usize,
    /// Baby-step count.
    pub baby: usize,
    /// Giant-step count.
    pub giant: usize,
    /// Whether the input is replicated (`dim < slots`).
    pub replicate: bool,
}

impl MatVecPlan {
    pub fn new(rows: usize, cols: usize, slots: usize) -> Result<Self> {
        let dim = rows.max(cols).next_power_of_two();
        if dim > slots {
            return Err(CkksError::Dimension(format!(
                "{rows}x{cols} matrix needs {dim} slots, only {slots} available"
            )));
        }
        let log = dim.trailing_zeros();
        let baby = 1usize << log.div_ceil(2);
        Ok(Self {
            dim,
            baby,
            giant: dim.div_ceil(baby),
            replicate: dim < slots,
        })
    }

    /// Signed rotation steps whose Galois keys make the product direct.
    pub fn rotation_steps(&self) -> Vec<i64> {
        let mut steps = Vec::new();
        if self.baby > 1 {
            steps.push(1);
        }
        if self.giant > 1 {
            steps.push(self.baby as i64);
        }
        if self.replicate {
            steps.push(-(self.dim as i64));
        }
        steps
    }
}

/// Rotation steps for a `rows x cols` product with `slots` slots.
pub fn matvec_rotation_steps(rows: usize, cols: usize, slots: usize) -> Result<Vec<i64>> {
    Ok(MatVecPlan::new(rows, cols, slots)?.rotation_steps())
}

/// Steps `1, 2, 4, ...` below `limit`: enough for [`sum_slots`] and for
/// composing any rotation when direct keys are absent.
pub fn power_of_two_steps(limit: usize) -> Vec<i64> {
    (0..usize::BITS)
        .map(|b| 1usize << b)
        .take_while(|&p| p < limit)
        .map(|p| p as i64)
        .collect()
}

fn rot(ctx: &CkksContext, ct: &Ciphertext, step: i64, keys: &EvaluationKeys) -> Result<Ciphertext> {
    if keys.galois.contains_key(&normalize_step(ctx, step)) {
        rotate(ctx, ct, step, keys)
    } else {
        rotate_any(ctx, ct, step, keys)
    }
}

fn add_opt(ctx: &CkksContext, acc: Option<Ciphertext>, term: Ciphertext) -> Result<Ciphertext> {
    match acc {
        Some(a) => add(ctx, &a, &term),
        None => Ok(term),
    }
}

/// `W v + b`, consuming one level. The output scale is the context scale.
pub fn fc_forward<T: Real>(
    ctx: &CkksContext,
    cv: &CipherVector,
    w: &PlainMatrix<T>,
    bias: &[T],
    keys: &EvaluationKeys,
) -> Result<CipherVector> {
    if w.cols() != cv.logical_len {
        return Err(CkksError::Dimension(format!(
            "matrix has {} columns, vector has length {}",
            w.cols(),
            cv.logical_len
        )));
    }
    if bias.len() != w.rows() {
        return Err(CkksError::Dimension(format!(
            "bias length {} for {} rows",
            bias.len(),
            w.rows()
        )));
    }
    let level = cv.level();
    if level == 0 {
        return Err(CkksError::DepthExhausted);
    }
    let slots = ctx.slot_count();
    let plan = MatVecPlan::new(w.rows(), w.cols(), slots)?;
    if plan.replicate && !cv.zero_tail {
        return Err(CkksError::State("input slots past the logical length are not zero".into()));
    }
    // weights are scaled so the product lands exactly on q_level * scale
    let q = ctx.table(level).modulus().value() as f64;
    let w_scale = q * ctx.scale() / cv.scale();

    let v = if plan.replicate {
        add(ctx, &cv.ct, &rot(ctx, &cv.ct, -(plan.dim as i64), keys)?)?
    } else {
        cv.ct.clone()
    };
    let baby_count = plan.baby.min(plan.dim);
    let mut babies = Vec::with_capacity(baby_count);
    babies.push(v);
    for j in 1..baby_count {
        let next = rot(ctx, &babies[j - 1], 1, keys)?;
        babies.push(next);
    }

    let mut acc: Option<Ciphertext> = None;
    let mut shifted = vec![0.0f64; slots];
    for g in (0..plan.giant).rev() {
        let offset = g * plan.baby;
        let mut inner: Option<Ciphertext> = None;
        for (j, baby) in babies.iter().enumerate() {
            let k = offset + j;
            if k >= plan.dim {
                break;
            }
            let diag = w.diagonal(plan.dim, k);
            if diag.iter().all(|&x| x == 0.0) {
                continue;
            }
            // pre-rotate right by the giant offset
            shifted.iter_mut().for_each(|x| *x = 0.0);
            for (i, &x) in diag.iter().enumerate() {
                shifted[(i + offset) % slots] = x;
            }
            let pt = encode(ctx, &shifted, level, w_scale)?;
            inner = Some(add_opt(ctx, inner, mul_plain(ctx, baby, &pt)?)?);
        }
        acc = match (acc, inner) {
            (None, x) => x,
            (Some(a), x) => {
                let r = rot(ctx, &a, plan.baby as i64, keys)?;
                Some(match x {
                    Some(x) => add(ctx, &r, &x)?,
                    None => r,
                })
            }
        };
    }
    let acc = match acc {
        Some(a) => a,
        None => mul_plain(ctx, &babies[0], &encode::<f64>(ctx, &[], level, w_scale)?)?,
    };
    let out = rescale(ctx, &acc)?;
    let b = encode(ctx, bias, out.level(), out.scale())?;
    Ok(CipherVector {
        ct: add_plain(ctx, &out, &b)?,
        logical_len: w.rows(),
        zero_tail: true,
    })
}

/// Slot-wise square, consuming one level.
pub fn square_activate(ctx: &CkksContext, cv: &CipherVector, keys: &EvaluationKeys) -> Result<CipherVector> {
    if cv.level() == 0 {
        return Err(CkksError::DepthExhausted);
    }
    let sq = mul(ctx, &cv.ct, &cv.ct, keys)?;
    Ok(CipherVector {
        ct: rescale(ctx, &sq)?,
        logical_len: cv.logical_len,
        zero_tail: cv.zero_tail,
    })
}

/// Puts the sum of the first `n` slots into slot 0. Other slots of the
/// result are unspecified; the logical length becomes 1.
pub fn sum_slots(ctx: &CkksContext, cv: &CipherVector, n: usize, keys: &EvaluationKeys) -> Result<CipherVector> {
    if n == 0 || n > cv.logical_len {
        return Err(CkksError::Dimension(format!(
            "cannot sum {n} slots of a length-{} vector",
            cv.logical_len
        )));
    }
    // acc holds windowed sums of width `width`; set bits of n pick disjoint windows
    let mut acc = cv.ct.clone();
    let mut width = 1usize;
    let mut offset = 0usize;
    let mut result: Option<Ciphertext> = None;
    loop {
        if n & width != 0 {
            let part = rot(ctx, &acc, offset as i64, keys)?;
            result = Some(add_opt(ctx, result, part)?);
            offset += width;
        }
        if width * 2 > n {
            break;
        }
        acc = add(ctx, &acc, &rotate(ctx, &acc, width as i64, keys)?)?;
        width *= 2;
    }
    Ok(CipherVector {
        ct: result.expect("n >= 1 has a set bit"),
        logical_len: 1,
        zero_tail: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::{keygen, KeySet};

    fn setup(n: usize, bits: &[u32], steps: &[i64]) -> (CkksContext, KeySet) {
        let ctx = CkksContext::new(n, bits, 26).unwrap();
        let keys = keygen(&ctx, steps, 21).unwrap();
        (ctx, keys)
    }

    fn assert_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (i, (g, w)) in got.iter().zip(want).enumerate() {
            assert!((g - w).abs() <= tol, "index {i}: {g} vs {w}");
        }
    }

    #[test]
    fn plan_shapes() {
        let p = MatVecPlan::new(128, 392, 4096).unwrap();
        assert_eq!((p.dim, p.baby, p.giant, p.replicate), (512, 32, 16, true));
        assert_eq!(p.rotation_steps(), vec![1, 32, -512]);
        let p = MatVecPlan::new(10, 128, 4096).unwrap();
        assert_eq!((p.dim, p.baby, p.giant), (128, 16, 8));
        let p = MatVecPlan::new(4, 4, 4).unwrap();
        assert!(!p.replicate);
        assert!(MatVecPlan::new(9, 1, 8).is_err());
        assert_eq!(power_of_two_steps(8), vec![1, 2, 4]);
    }

    #[test]
    fn matrix_validation() {
        assert!(PlainMatrix::<f64>::new(0, 1, vec![]).is_err());
        assert!(PlainMatrix::new(1, 2, vec![1.0f64]).is_err());
        assert!(PlainMatrix::new(1, 1, vec![f64::NAN]).is_err());
        let m = PlainMatrix::from_fn(2, 3, |r, c| (r * 3 + c) as f32).unwrap();
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 12.0]);
    }

    #[test]
    fn identity_and_row_sum() {
        let (ctx, keys) = setup(64, &[31, 26, 31], &matvec_rotation_steps(4, 4, 32).unwrap());
        let cv = encrypt_vector(&ctx, keys.public(), &[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        let id = PlainMatrix::<f64>::identity(4).unwrap();
        let out = fc_forward(&ctx, &cv, &id, &[0.0; 4], &keys.eval).unwrap();
        assert_eq!(out.level(), cv.level() - 1);
        assert!((out.scale() / ctx.scale() - 1.0).abs() < 1e-9);
        assert_close(&decrypt_vector(&ctx, &keys.secret, &out).unwrap(), &[1.0, 2.0, 3.0, 4.0], 1e-3);

        let ones = PlainMatrix::new(1, 4, vec![1.0f64; 4]).unwrap();
        let out = fc_forward(&ctx, &cv, &ones, &[0.0], &keys.eval).unwrap();
        assert_close(&decrypt_vector(&ctx, &keys.secret, &out).unwrap(), &[10.0], 1e-3);
    }

    #[test]
    fn rectangular_with_bias_matches_oracle() {
        let (ctx, keys) = setup(256, &[31, 26, 31], &matvec_rotation_steps(10, 40, 128).unwrap());
        let w = PlainMatrix::from_fn(10, 40, |r, c| (((r * 41 + c * 7) % 23) as f64 / 11.0) - 1.0).unwrap();
        let v: Vec<f64> = (0..40).map(|i| ((i * 13 % 17) as f64 / 8.5) - 1.0).collect();
        let b: Vec<f64> = (0..10).map(|i| i as f64 / 10.0 - 0.5).collect();
        let cv = encrypt_vector(&ctx, keys.public(), &v, 2).unwrap();
        let out = fc_forward(&ctx, &cv, &w, &b, &keys.eval).unwrap();
        assert_eq!(out.logical_len(), 10);
        let want: Vec<f64> = w.matvec(&v).iter().zip(&b).map(|(x, y)| x + y).collect();
        assert_close(&decrypt_vector(&ctx, &keys.secret, &out).unwrap(), &want, 1e-2);
    }

    #[test]
    fn composed_rotation_fallback() {
        let (ctx, keys) = setup(64, &[31, 26, 31], &power_of_two_steps(32));
        let w = PlainMatrix::from_fn(3, 5, |r, c| if (r + c) % 2 == 0 { 0.5 } else { -0.25 }).unwrap();
        let v = [0.1, 0.2, 0.3, 0.4, 0.5];
        let cv = encrypt_vector(&ctx, keys.public(), &v, 3).unwrap();
        let out = fc_forward(&ctx, &cv, &w, &[0.0; 3], &keys.eval).unwrap();
        assert_close(&decrypt_vector(&ctx, &keys.secret, &out).unwrap(), &w.matvec(&v), 1e-3);
    }

    #[test]
    fn fc_errors() {
        let (ctx, keys) = setup(32, &[31, 31], &[]);
        let cv = encrypt_vector(&ctx, keys.public(), &[1.0, 2.0], 1).unwrap();
        let w = PlainMatrix::<f64>::identity(3).unwrap();
        assert!(matches!(
            fc_forward(&ctx, &cv, &w, &[0.0; 3], &keys.eval),
            Err(CkksError::Dimension(_))
        ));
        let w = PlainMatrix::<f64>::identity(2).unwrap();
        assert!(matches!(fc_forward(&ctx, &cv, &w, &[0.0], &keys.eval), Err(CkksError::Dimension(_))));
        assert!(matches!(
            fc_forward(&ctx, &cv, &w, &[0.0; 2], &keys.eval),
            Err(CkksError::MissingKey(_))
        ));
        let (ctx0, keys0) = setup(32, &[31], &[]);
        let cv0 = encrypt_vector(&ctx0, keys0.public(), &[1.0, 2.0], 1).unwrap();
        assert!(matches!(
            fc_forward(&ctx0, &cv0, &w, &[0.0; 2], &keys0.eval),
            Err(CkksError::DepthExhausted)
        ));
        assert!(matches!(square_activate(&ctx0, &cv0, &keys0.eval), Err(CkksError::DepthExhausted)));
        let long = vec![0.0; 17];
        assert!(matches!(
            encrypt_vector(&ctx, keys.public(), &long, 1),
            Err(CkksError::Capacity { .. })
        ));
    }

    #[test]
    fn square_and_sums() {
        let (ctx, keys) = setup(64, &[31, 26, 31], &power_of_two_steps(32));
        let cv = encrypt_vector(&ctx, keys.public(), &[0.0, 1.0, -2.0], 4).unwrap();
        let sq = square_activate(&ctx, &cv, &keys.eval).unwrap();
        assert_eq!(sq.level(), 1);
        assert_close(&decrypt_vector(&ctx, &keys.secret, &sq).unwrap(), &[0.0, 1.0, 4.0], 1e-2);

        let ones = encrypt_vector(&ctx, keys.public(), &[1.0; 4], 5).unwrap();
        let s = sum_slots(&ctx, &ones, 4, &keys.eval).unwrap();
        assert_close(&decrypt_vector(&ctx, &keys.secret, &s).unwrap(), &[4.0], 1e-3);
        let five = encrypt_vector(&ctx, keys.public(), &[5.0], 6).unwrap();
        let s = sum_slots(&ctx, &five, 1, &keys.eval).unwrap();
        assert_close(&decrypt_vector(&ctx, &keys.secret, &s).unwrap(), &[5.0], 1e-3);
        let v: Vec<f64> = (0..23).map(|i| i as f64 / 10.0).collect();
        let cv = encrypt_vector(&ctx, keys.public(), &v, 7).unwrap();
        let s = sum_slots(&ctx, &cv, 23, &keys.eval).unwrap();
        assert!(!s.has_zero_tail());
        assert_close(&decrypt_vector(&ctx, &keys.secret, &s).unwrap(), &[v.iter().sum()], 1e-2);
        assert!(sum_slots(&ctx, &cv, 24, &keys.eval).is_err());
    }
}
