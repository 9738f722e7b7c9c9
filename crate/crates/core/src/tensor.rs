//! Dense row-major tensors and the plaintext layer kernels.

use duetlite_ckks::{PlainMatrix, Real};

use crate::error::{DuetError, Result};

const TENSOR_MAGIC: &[u8; 4] = b"DTN1";
const DTYPE_F32: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Real> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() {
            return Err(DuetError::Shape("tensor needs at least one dimension".into()));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(DuetError::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64_lossy(x.as_f64())).collect(),
        }
    }

    pub fn flatten(self) -> Self {
        Self {
            shape: vec![self.data.len()],
            data: self.data,
        }
    }

    pub fn square(mut self) -> Self {
        self.data.iter_mut().for_each(|x| *x = *x * *x);
        self
    }

    /// Wire form used for activation sizes: magic, dtype, rank, u32 dims and
    /// f32 little-endian values.
    pub fn to_wire_f32(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.push(DTYPE_F32);
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
        out
    }

    pub fn from_wire_f32(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| DuetError::Codec(format!("tensor: {m}"));
        if bytes.len() < 6 || &bytes[..4] != TENSOR_MAGIC {
            return Err(bad("bad magic"));
        }
        if bytes[4] != DTYPE_F32 {
            return Err(bad("unknown dtype"));
        }
        let rank = bytes[5] as usize;
        let body = &bytes[6..];
        if body.len() < 4 * rank {
            return Err(bad("truncated shape"));
        }
        let shape: Vec<usize> = body[..4 * rank]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let values = &body[4 * rank..];
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("shape overflow"))?;
        if values.len() != 4 * n {
            return Err(bad("value count does not match shape"));
        }
        let data = values
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        Self::new(shape, data)
    }
}

/// 2-D convolution over a `[C, H, W]` input. Weights are `[out, in, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T: Real> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn check(&self) -> Result<()> {
        let want = self.out_channels * self.in_channels * self.kernel * self.kernel;
        if self.kernel == 0 || self.stride == 0 {
            return Err(DuetError::Shape("kernel and stride must be positive".into()));
        }
        if self.weights.len() != want || self.bias.len() != self.out_channels {
            return Err(DuetError::Shape(format!(
                "conv {}x{}x{k}x{k} has {} weights and {} biases",
                self.out_channels,
                self.in_channels,
                self.weights.len(),
                self.bias.len(),
                k = self.kernel
            )));
        }
        Ok(())
    }

    pub fn output_size(&self, input: usize) -> usize {
        (input + 2 * self.padding).saturating_sub(self.kernel) / self.stride + 1
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check()?;
        let &[c, h, w] = x.shape() else {
            return Err(DuetError::Shape(format!("conv input must be [C, H, W], got {:?}", x.shape())));
        };
        if c != self.in_channels || h + 2 * self.padding < self.kernel || w + 2 * self.padding < self.kernel {
            return Err(DuetError::Shape(format!(
                "conv expects {} channels of at least {}x{}, got {:?}",
                self.in_channels,
                self.kernel,
                self.kernel,
                x.shape()
            )));
        }
        let (oh, ow, k) = (self.output_size(h), self.output_size(w), self.kernel);
        let (p, s) = (self.padding as isize, self.stride as isize);
        let src = x.data();
        let mut out = Vec::with_capacity(self.out_channels * oh * ow);
        for o in 0..self.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias[o];
                    for i in 0..c {
                        let wbase = (o * c + i) * k * k;
                        let xbase = i * h * w;
                        for ky in 0..k {
                            let y = oy as isize * s + ky as isize - p;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let xx = ox as isize * s + kx as isize - p;
                                if xx < 0 || xx >= w as isize {
                                    continue;
                                }
                                acc = acc + self.weights[wbase + ky * k + kx] * src[xbase + y as usize * w + xx as usize];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        Tensor::new(vec![self.out_channels, oh, ow], out)
    }
}

/// Fully connected layer `y = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T: Real> {
    pub weights: PlainMatrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn check(&self) -> Result<()> {
        if self.bias.len() != self.weights.rows() {
            return Err(DuetError::Shape(format!(
                "dense layer with {} rows has {} biases",
                self.weights.rows(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check()?;
        if x.shape() != [self.weights.cols()] {
            return Err(DuetError::Shape(format!(
                "dense layer expects [{}], got {:?}",
                self.weights.cols(),
                x.shape()
            )));
        }
        let y = self
            .weights
            .matvec(x.data())
            .into_iter()
            .zip(&self.bias)
            .map(|(v, &b)| v + b)
            .collect();
        Tensor::new(vec![self.weights.rows()], y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_roundtrip_and_size() {
        let t = Tensor::new(vec![2, 3], vec![1.0f64, -2.0, 0.5, 0.25, 3.0, 4.0]).unwrap();
        let w = t.to_wire_f32();
        assert_eq!(w.len(), 6 + 8 + 24);
        assert_eq!(Tensor::<f64>::from_wire_f32(&w).unwrap(), t);
        assert!(Tensor::<f64>::from_wire_f32(&w[..w.len() - 1]).is_err());
    }

    #[test]
    fn conv_identity_kernel() {
        let conv = Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
            padding: 1,
            weights: vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            bias: vec![0.5],
        };
        let x = Tensor::new(vec![1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn shape_errors() {
        assert!(Tensor::new(vec![2, 2], vec![1.0f64; 3]).is_err());
        let d = Dense {
            weights: PlainMatrix::new(2, 3, vec![0.0f64; 6]).unwrap(),
            bias: vec![0.0; 2],
        };
        assert!(d.forward(&Tensor::zeros(vec![2])).is_err());
    }
}
