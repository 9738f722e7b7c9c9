//! IDX readers for MNIST images (magic 2051) and labels (magic 2049).

use std::path::{Path, PathBuf};

use duetlite_ckks::Real;

use crate::error::{DuetError, Result};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const MNIST_DIR_ENV: &str = "DUETLITE_MNIST_DIR";

/// File pairs tried in order inside a dataset directory.
pub const CANDIDATES: [(&str, &str); 2] = [
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    ("sample-images-idx3-ubyte", "sample-labels-idx1-ubyte"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MnistImage {
    pub rows: usize,
    pub cols: usize,
    /// Raw pixel bytes, row-major.
    pub pixels: Vec<u8>,
    pub label: u8,
}

impl MnistImage {
    /// `[1, rows, cols]` with pixels mapped to `[0, 1]`.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.pixels.iter().map(|&p| T::from_f64_lossy(p as f64 / 255.0)).collect();
        Tensor::new(vec![1, self.rows, self.cols], data).expect("pixel count matches dims")
    }
}

fn be_u32(b: &[u8], at: usize) -> Option<u32> {
    b.get(at..at + 4).map(|s| u32::from_be_bytes(s.try_into().expect("4 bytes")))
}

fn header(bytes: &[u8], magic: u32, dims: usize, what: &str) -> Result<Vec<usize>> {
    let got = be_u32(bytes, 0).ok_or_else(|| DuetError::Dataset(format!("{what}: file shorter than its header")))?;
    if got != magic {
        return Err(DuetError::Dataset(format!("{what}: magic {got} (expected {magic})")));
    }
    (0..dims)
        .map(|i| {
            be_u32(bytes, 4 + 4 * i)
                .map(|d| d as usize)
                .ok_or_else(|| DuetError::Dataset(format!("{what}: truncated header")))
        })
        .collect()
}

fn body<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    let need = offset + len;
    if bytes.len() < need {
        return Err(DuetError::Dataset(format!(
            "{what}: truncated ({} bytes, header promises {need})",
            bytes.len()
        )));
    }
    Ok(&bytes[offset..need])
}

/// Returns `(rows, cols, pixels per image)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let dims = header(bytes, IMAGE_MAGIC, 3, "images")?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let per = rows
        .checked_mul(cols)
        .filter(|&p| p > 0)
        .ok_or_else(|| DuetError::Dataset(format!("images: bad dimensions {rows}x{cols}")))?;
    let total = n.checked_mul(per).ok_or_else(|| DuetError::Dataset("images: size overflow".into()))?;
    let data = body(bytes, 16, total, "images")?;
    Ok((rows, cols, data.chunks_exact(per).map(<[u8]>::to_vec).collect()))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let n = header(bytes, LABEL_MAGIC, 1, "labels")?[0];
    Ok(body(bytes, 8, n, "labels")?.to_vec())
}

pub fn load_mnist(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Vec<MnistImage>> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| DuetError::io(p, e));
    let (rows, cols, pixels) = parse_images(&read(images.as_ref())?)?;
    let labels = parse_labels(&read(labels.as_ref())?)?;
    if labels.len() != pixels.len() {
        return Err(DuetError::Dataset(format!(
            "{} images but {} labels",
            pixels.len(),
            labels.len()
        )));
    }
    Ok(pixels
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| MnistImage {
            rows,
            cols,
            pixels,
            label,
        })
        .collect())
}

/// First complete image/label pair found in `dir`.
pub fn locate(dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    CANDIDATES
        .iter()
        .map(|(i, l)| (dir.join(i), dir.join(l)))
        .find(|(i, l)| i.is_file() && l.is_file())
        .ok_or_else(|| {
            DuetError::Config(format!(
                "no MNIST files in {} (looked for {})",
                dir.display(),
                CANDIDATES.map(|c| c.0).join(", ")
            ))
        })
}

/// `$DUETLITE_MNIST_DIR`, else `data/mnist-sample` relative to the working
/// directory or to the workspace root.
pub fn default_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(MNIST_DIR_ENV) {
        return PathBuf::from(d);
    }
    let local = PathBuf::from("data/mnist-sample");
    if local.is_dir() {
        return local;
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-sample")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for x in [IMAGE_MAGIC, n, rows, cols] {
            b.extend_from_slice(&x.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn parses_and_rejects() {
        let b = idx_images(2, 2, 2, &[0, 255, 1, 2, 3, 4, 5, 6]);
        let (r, c, imgs) = parse_images(&b).unwrap();
        assert_eq!((r, c, imgs.len()), (2, 2, 2));
        assert_eq!(imgs[1], vec![3, 4, 5, 6]);
        assert!(parse_images(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[3] = 0x01;
        assert!(parse_images(&bad).is_err());
        assert!(parse_labels(&b).is_err());
    }
}
