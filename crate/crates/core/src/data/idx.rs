//! IDX containers (MNIST family). Gzipped files are detected by their
//! magic bytes and inflated transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Unsigned-byte, 3-dimensional.
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
/// Unsigned-byte, 1-dimensional.
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(format!("{}: header truncated", path.display())))
}

/// Validates magic and dimension header; returns dims and the payload.
fn parse<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::format(format!(
            "{}: magic {found} (0x{found:08x}), expected {magic}",
            path.display()
        )));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|i| be_u32(bytes, 4 + 4 * i, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndim;
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(format!("{}: dimension product overflows", path.display())))?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::format(format!(
            "{}: header promises {expected} bytes of data, file has {}",
            path.display(),
            payload.len()
        )));
    }
    Ok((dims, payload))
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (dims, payload) = parse(&bytes, IMAGE_MAGIC, path)?;
    Ok(IdxImages {
        count: dims[0],
        rows: dims[1],
        cols: dims[2],
        pixels: payload.to_vec(),
    })
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (_, payload) = parse(&bytes, LABEL_MAGIC, path)?;
    Ok(payload.to_vec())
}

/// Images as `(n, 1, rows, cols)` with pixels scaled to `[0, 1]`,
/// not normalized. The class count is inferred as `max label + 1`, at least 2.
pub fn load_idx_raw<T: Scalar>(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset<T>> {
    let img = read_idx_images(images.as_ref())?;
    let lab = read_idx_labels(labels.as_ref())?;
    if img.count != lab.len() {
        return Err(Error::format(format!(
            "{} images but {} labels",
            img.count,
            lab.len()
        )));
    }
    if img.count == 0 {
        return Err(Error::format("IDX file holds no images"));
    }
    let scale = T::of(1.0 / 255.0);
    let data = img.pixels.iter().map(|&p| T::of(p as f64) * scale).collect();
    let inputs = Tensor::new(vec![img.count, 1, img.rows, img.cols], data)?;
    let labels: Vec<usize> = lab.iter().map(|&y| y as usize).collect();
    let classes = labels.iter().copied().max().unwrap_or(0).max(1) + 1;
    let name = images
        .as_ref()
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    LabeledDataset::new(inputs, labels, classes, name)
}

/// [`load_idx_raw`] followed by per-channel standardization.
pub fn load_idx<T: Scalar>(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset<T>> {
    Ok(load_idx_raw(images, labels)?.normalize())
}
