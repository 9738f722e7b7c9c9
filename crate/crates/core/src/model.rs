//! The MNIST CNN, its weight file format and the client/server split.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use duetlite_ckks::{PlainMatrix, Real};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DuetError, Result};
use crate::tensor::{Conv2d, Dense, Tensor};

pub const INPUT_SHAPE: [usize; 3] = [1, 28, 28];
pub const CLASSES: usize = 10;
pub const WEIGHT_STD: f64 = 0.1;
/// Bits of every middle chain prime, equal to the scale.
pub const SCALE_BITS: u32 = 26;
/// The outer primes carry this many bits above the scale.
pub const GUARD_BITS: u32 = 5;

const WEIGHTS_MAGIC: &[u8; 4] = b"DLW1";
const WEIGHTS_VERSION: u16 = 1;
const FLAG_SHAPES_ONLY: u16 = 1;

const KIND_CONV: u8 = 1;
const KIND_SQUARE: u8 = 2;
const KIND_FLATTEN: u8 = 3;
const KIND_DENSE: u8 = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T: Real> {
    Conv(Conv2d<T>),
    Square,
    Flatten,
    Dense(Dense<T>),
}

/// Layer structure without parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerShape {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Square,
    Flatten,
    Dense {
        rows: usize,
        cols: usize,
    },
}

impl LayerShape {
    /// Only dense layers and squares run under encryption.
    pub fn he_evaluable(&self) -> bool {
        matches!(self, LayerShape::Dense { .. } | LayerShape::Square)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerShape::Conv { .. } => "conv",
            LayerShape::Square => "square",
            LayerShape::Flatten => "flatten",
            LayerShape::Dense { .. } => "fc",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec<T: Real> {
    pub name: String,
    pub layer: Layer<T>,
}

impl<T: Real> LayerSpec<T> {
    pub fn shape(&self) -> LayerShape {
        match &self.layer {
            Layer::Conv(c) => LayerShape::Conv {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
            },
            Layer::Square => LayerShape::Square,
            Layer::Flatten => LayerShape::Flatten,
            Layer::Dense(d) => LayerShape::Dense {
                rows: d.weights.rows(),
                cols: d.weights.cols(),
            },
        }
    }

    pub fn forward(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        match &self.layer {
            Layer::Conv(c) => c.forward(&x),
            Layer::Square => Ok(x.square()),
            Layer::Flatten => Ok(x.flatten()),
            Layer::Dense(d) => d.forward(&x),
        }
    }

    fn cast<U: Real>(&self) -> LayerSpec<U> {
        let v = |xs: &[T]| xs.iter().map(|&x| U::from_f64_lossy(x.as_f64())).collect::<Vec<U>>();
        let layer = match &self.layer {
            Layer::Conv(c) => Layer::Conv(Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
                weights: v(&c.weights),
                bias: v(&c.bias),
            }),
            Layer::Square => Layer::Square,
            Layer::Flatten => Layer::Flatten,
            Layer::Dense(d) => Layer::Dense(Dense {
                weights: PlainMatrix::new(d.weights.rows(), d.weights.cols(), v(d.weights.values()))
                    .expect("same shape"),
                bias: v(&d.bias),
            }),
        };
        LayerSpec {
            name: self.name.clone(),
            layer,
        }
    }
}

/// Runs `layers` in order, reporting every intermediate output.
pub fn forward_layers<T: Real>(
    layers: &[LayerSpec<T>],
    input: Tensor<T>,
    mut observe: impl FnMut(&LayerSpec<T>, &Tensor<T>),
) -> Result<Tensor<T>> {
    layers.iter().try_fold(input, |x, l| {
        let y = l.forward(x)?;
        observe(l, &y);
        Ok(y)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Real> {
    pub layers: Vec<LayerSpec<T>>,
}

pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;

impl<T: Real> Model<T> {
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        forward_layers(&self.layers, input.clone(), |_, _| {})
    }

    pub fn shapes(&self) -> Vec<LayerShape> {
        self.layers.iter().map(LayerSpec::shape).collect()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec<T>> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            layers: self.layers.iter().map(LayerSpec::cast).collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match &l.layer {
                Layer::Conv(c) => c.weights.len() + c.bias.len(),
                Layer::Dense(d) => d.weights.values().len() + d.bias.len(),
                _ => 0,
            })
            .sum()
    }

    /// Encodes the model as a DLW1 weights file.
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_layers(&self.layers, false)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (flags, layers) = decode_layers(bytes)?;
        if flags & FLAG_SHAPES_ONLY != 0 {
            return Err(DuetError::Codec("file holds shapes only, no weights".into()));
        }
        Ok(Model {
            layers: layers.into_iter().map(|(_, l)| l.expect("weights present")).collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(&path, self.to_bytes()).map_err(|e| DuetError::io(&path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(&path).map_err(|e| DuetError::io(&path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// A segment as a DLW1 weights file.
pub fn encode_segment<T: Real>(layers: &[LayerSpec<T>]) -> Vec<u8> {
    encode_layers(layers, false)
}

/// Layer names and shapes as a DLW1 file with the shapes-only flag.
pub fn encode_shapes<T: Real>(layers: &[LayerSpec<T>]) -> Vec<u8> {
    encode_layers(layers, true)
}

pub fn decode_shapes(bytes: &[u8]) -> Result<Vec<(String, LayerShape)>> {
    let (_, layers) = decode_layers::<f64>(bytes)?;
    Ok(layers.into_iter().map(|(s, _)| s).collect())
}

fn put_u32(out: &mut Vec<u8>, x: usize) {
    out.extend_from_slice(&(x as u32).to_le_bytes());
}

fn put_values<T: Real>(out: &mut Vec<u8>, xs: &[T]) {
    for &x in xs {
        out.extend_from_slice(&x.as_f64().to_le_bytes());
    }
}

fn encode_layers<T: Real>(layers: &[LayerSpec<T>], shapes_only: bool) -> Vec<u8> {
    let mut out = WEIGHTS_MAGIC.to_vec();
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(if shapes_only { FLAG_SHAPES_ONLY } else { 0 }).to_le_bytes());
    put_u32(&mut out, layers.len());
    for l in layers {
        let name = l.name.as_bytes();
        match &l.layer {
            Layer::Conv(_) => out.push(KIND_CONV),
            Layer::Square => out.push(KIND_SQUARE),
            Layer::Flatten => out.push(KIND_FLATTEN),
            Layer::Dense(_) => out.push(KIND_DENSE),
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        match &l.layer {
            Layer::Conv(c) => {
                for d in [c.in_channels, c.out_channels, c.kernel, c.stride, c.padding] {
                    put_u32(&mut out, d);
                }
                if !shapes_only {
                    put_values(&mut out, &c.weights);
                    put_values(&mut out, &c.bias);
                }
            }
            Layer::Dense(d) => {
                put_u32(&mut out, d.weights.rows());
                put_u32(&mut out, d.weights.cols());
                if !shapes_only {
                    put_values(&mut out, d.weights.values());
                    put_values(&mut out, &d.bias);
                }
            }
            Layer::Square | Layer::Flatten => {}
        }
    }
    out
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.b.len())
            .ok_or_else(|| DuetError::Codec(format!("truncated at byte {}", self.at)))?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn dim(&mut self) -> Result<usize> {
        let d = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        if d > 1 << 20 {
            return Err(DuetError::Codec(format!("dimension {d} out of range")));
        }
        Ok(d)
    }

    fn values<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| DuetError::Codec("value count overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }
}

type DecodedLayer<T> = ((String, LayerShape), Option<LayerSpec<T>>);

fn decode_layers<T: Real>(bytes: &[u8]) -> Result<(u16, Vec<DecodedLayer<T>>)> {
    let mut r = Cursor { b: bytes, at: 0 };
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(DuetError::Codec("not a DLW1 weights file".into()));
    }
    let version = r.u16()?;
    if version != WEIGHTS_VERSION {
        return Err(DuetError::Codec(format!("unsupported weights version {version}")));
    }
    let flags = r.u16()?;
    if flags & !FLAG_SHAPES_ONLY != 0 {
        return Err(DuetError::Codec(format!("unknown flags {flags:#x}")));
    }
    let shapes_only = flags & FLAG_SHAPES_ONLY != 0;
    let count = r.dim()?;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let kind = r.u8()?;
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| DuetError::Codec("layer name is not utf-8".into()))?;
        let (shape, layer) = match kind {
            KIND_CONV => {
                let (i, o, k, s, p) = (r.dim()?, r.dim()?, r.dim()?, r.dim()?, r.dim()?);
                let shape = LayerShape::Conv {
                    in_channels: i,
                    out_channels: o,
                    kernel: k,
                    stride: s,
                    padding: p,
                };
                let layer = if shapes_only {
                    None
                } else {
                    let conv = Conv2d {
                        in_channels: i,
                        out_channels: o,
                        kernel: k,
                        stride: s,
                        padding: p,
                        weights: r.values(o * i * k * k)?,
                        bias: r.values(o)?,
                    };
                    conv.check()?;
                    Some(Layer::Conv(conv))
                };
                (shape, layer)
            }
            KIND_DENSE => {
                let (rows, cols) = (r.dim()?, r.dim()?);
                let layer = if shapes_only {
                    None
                } else {
                    let weights = PlainMatrix::new(rows, cols, r.values(rows * cols)?)
                        .map_err(|e| DuetError::Codec(e.to_string()))?;
                    Some(Layer::Dense(Dense {
                        weights,
                        bias: r.values(rows)?,
                    }))
                };
                (LayerShape::Dense { rows, cols }, layer)
            }
            KIND_SQUARE => (LayerShape::Square, (!shapes_only).then_some(Layer::Square)),
            KIND_FLATTEN => (LayerShape::Flatten, (!shapes_only).then_some(Layer::Flatten)),
            other => return Err(DuetError::Codec(format!("unknown layer kind {other}"))),
        };
        let spec = layer.map(|layer| LayerSpec {
            name: name.clone(),
            layer,
        });
        layers.push(((name, shape), spec));
    }
    if r.at != bytes.len() {
        return Err(DuetError::Codec(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok((flags, layers))
}

/// The fixed architecture: two strided 3x3 convolutions with square
/// activations, then 392 -> 128 -> 10 with a square in between.
pub fn mnist_cnn<T: Real>(mut next: impl FnMut() -> T) -> Model<T> {
    let mut v = |n: usize| (0..n).map(|_| next()).collect::<Vec<T>>();
    let mut conv = |name: &str, cin: usize| {
        let weights = v(8 * cin * 9);
        let bias = v(8);
        LayerSpec {
            name: name.into(),
            layer: Layer::Conv(Conv2d {
                in_channels: cin,
                out_channels: 8,
                kernel: 3,
                stride: 2,
                padding: 1,
                weights,
                bias,
            }),
        }
    };
    let conv1 = conv("Conv1", 1);
    let conv2 = conv("Conv2", 8);
    let mut dense = |name: &str, rows: usize, cols: usize| {
        let weights = PlainMatrix::new(rows, cols, v(rows * cols)).expect("consistent shape");
        let bias = v(rows);
        LayerSpec {
            name: name.into(),
            layer: Layer::Dense(Dense { weights, bias }),
        }
    };
    let fc1 = dense("FC1", 128, 392);
    let fc2 = dense("FC2", CLASSES, 128);
    let plain = |name: &str, layer| LayerSpec {
        name: name.into(),
        layer,
    };
    Model {
        layers: vec![
            conv1,
            plain("Conv1 Activation", Layer::Square),
            conv2,
            plain("Conv2 Activation", Layer::Square),
            plain("Flatten", Layer::Flatten),
            fc1,
            plain("Sq. Activation", Layer::Square),
            fc2,
        ],
    }
}

/// Deterministic Gaussian weights and biases with standard deviation 0.1.
pub fn gen_weights(seed: u64) -> Model64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, WEIGHT_STD).expect("positive std");
    mnist_cnn(|| normal.sample(&mut rng))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPoint {
    /// After the first convolution block; leaves a convolution on the server.
    Conv1,
    /// After the second convolution block and the flatten.
    Conv2,
    /// After the first dense layer and its square activation.
    Fc1Act,
}

impl SplitPoint {
    pub const SUPPORTED: [SplitPoint; 2] = [SplitPoint::Conv2, SplitPoint::Fc1Act];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitPoint::Conv1 => "conv1",
            SplitPoint::Conv2 => "conv2",
            SplitPoint::Fc1Act => "fc1_act",
        }
    }

    /// Name of the first server-side layer.
    fn server_head(&self) -> &'static str {
        match self {
            SplitPoint::Conv1 => "Conv2",
            SplitPoint::Conv2 => "FC1",
            SplitPoint::Fc1Act => "FC2",
        }
    }
}

impl fmt::Display for SplitPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitPoint {
    type Err = DuetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv1" => Ok(SplitPoint::Conv1),
            "conv2" => Ok(SplitPoint::Conv2),
            "fc1_act" | "fc1-act" => Ok(SplitPoint::Fc1Act),
            other => Err(DuetError::Config(format!(
                "unknown split point {other:?} (expected conv2 or fc1_act)"
            ))),
        }
    }
}

/// Client segment runs in plaintext at the data owner, server segment under
/// encryption at the data scientist. `client ++ server` is the whole model.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitModel<T: Real> {
    pub client: Vec<LayerSpec<T>>,
    pub server: Vec<LayerSpec<T>>,
}

impl<T: Real> SplitModel<T> {
    pub fn server_shapes(&self) -> Vec<LayerShape> {
        self.server.iter().map(LayerSpec::shape).collect()
    }

    pub fn rejoin(&self) -> Model<T> {
        Model {
            layers: self.client.iter().chain(&self.server).cloned().collect(),
        }
    }
}

pub fn split_model<T: Real>(model: &Model<T>, point: SplitPoint) -> Result<SplitModel<T>> {
    let head = point.server_head();
    let index = model
        .layers
        .iter()
        .position(|l| l.name == head)
        .ok_or_else(|| DuetError::Split(format!("model has no layer named {head}")))?;
    split_at(model, index)
}

/// Splits before layer `index`; every server layer must be HE-evaluable.
pub fn split_at<T: Real>(model: &Model<T>, index: usize) -> Result<SplitModel<T>> {
    if index == 0 || index >= model.layers.len() {
        return Err(DuetError::Split(format!(
            "split index {index} leaves an empty segment of a {}-layer model",
            model.layers.len()
        )));
    }
    let (client, server) = model.layers.split_at(index);
    if let Some(bad) = server.iter().find(|l| !l.shape().he_evaluable()) {
        return Err(DuetError::Split(format!(
            "server segment would contain {} ({}), which has no encrypted form",
            bad.name,
            bad.shape().kind_name()
        )));
    }
    Ok(SplitModel {
        client: client.to_vec(),
        server: server.to_vec(),
    })
}

/// Multiplicative depth: one level per dense layer and per square.
pub fn required_depth(shapes: &[LayerShape]) -> Result<usize> {
    shapes.iter().try_fold(0usize, |d, s| {
        if s.he_evaluable() {
            Ok(d + 1)
        } else {
            Err(DuetError::Split(format!("{} layer has no encrypted form", s.kind_name())))
        }
    })
}

/// `[31] + [26] * depth + [31]`.
pub fn chain_for_depth(depth: usize) -> Vec<u32> {
    chain_with_scale(depth, SCALE_BITS)
}

/// Middle primes match the scale; the outer two carry [`GUARD_BITS`] more.
pub fn chain_with_scale(depth: usize, scale_bits: u32) -> Vec<u32> {
    let outer = scale_bits + GUARD_BITS;
    std::iter::once(outer)
        .chain(std::iter::repeat(scale_bits).take(depth))
        .chain(std::iter::once(outer))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_shape() {
        assert_eq!(chain_for_depth(0), vec![31, 31]);
        assert_eq!(chain_for_depth(3).iter().sum::<u32>(), 140);
        assert_eq!(chain_for_depth(1).iter().sum::<u32>(), 88);
    }

    #[test]
    fn shapes_manifest_roundtrip() {
        let m = gen_weights(1);
        let s = decode_shapes(&encode_shapes(&m.layers)).unwrap();
        let want: Vec<_> = m.layers.iter().map(|l| (l.name.clone(), l.shape())).collect();
        assert_eq!(s, want);
        assert!(Model::<f64>::from_bytes(&encode_shapes(&m.layers)).is_err());
    }

    #[test]
    fn split_names() {
        for p in [SplitPoint::Conv1, SplitPoint::Conv2, SplitPoint::Fc1Act] {
            assert_eq!(p.as_str().parse::<SplitPoint>().unwrap(), p);
        }
        assert!("fc3".parse::<SplitPoint>().is_err());
    }
}
