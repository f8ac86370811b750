//! Real datasets: synthetic blobs, IDX image files, normalization and
//! downsampling.

mod blobs;
mod idx;

pub use blobs::gen_blobs;
pub use idx::{load_idx, load_idx_raw, read_idx_images, read_idx_labels, IdxImages, IMAGE_MAGIC, LABEL_MAGIC};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

/// Per-channel affine normalization `(x − mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        NormStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Channel count of a per-example shape: the leading extent of a
/// `(c, h, w)` image, otherwise a single channel.
pub fn channels_of(shape: &[usize]) -> usize {
    if shape.len() == 3 {
        shape[0]
    } else {
        1
    }
}

/// Labeled examples `(x_i, y_i)`, inputs stacked along the leading axis.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    inputs: Tensor<T>,
    labels: Vec<usize>,
    classes: usize,
    name: String,
    norm: NormStats,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>, classes: usize, name: impl Into<String>) -> Result<Self> {
        let n = labels.len();
        if inputs.shape().len() < 2 || inputs.shape()[0] != n {
            return Err(Error::Shape {
                op: "dataset",
                lhs: inputs.shape().to_vec(),
                rhs: vec![n],
            });
        }
        if classes < 2 {
            return Err(Error::contract("a dataset needs at least 2 classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::contract(format!("label {bad} outside [0, {classes})")));
        }
        if n < classes {
            return Err(Error::contract(format!("{n} examples for {classes} classes")));
        }
        let channels = channels_of(&inputs.shape()[1..]);
        Ok(LabeledDataset {
            inputs,
            labels,
            classes,
            name: name.into(),
            norm: NormStats::identity(channels),
        })
    }

    pub fn inputs(&self) -> &Tensor<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shape of one example.
    pub fn input_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let inputs = self.inputs.select_rows(idx)?;
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Ok(LabeledDataset {
            inputs,
            labels,
            classes: self.classes,
            name: self.name.clone(),
            norm: self.norm.clone(),
        })
    }

    /// The first `n` examples.
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let out = self.subset(&idx)?;
        if out.len() < out.classes {
            return Err(Error::contract(format!("{} examples for {} classes", out.len(), out.classes)));
        }
        Ok(out)
    }

    pub fn rename(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Views each example with a new shape of equal size (e.g. a
    /// 16-vector as a `(1, 4, 4)` image).
    pub fn with_input_shape(self, shape: &[usize]) -> Result<Self> {
        let old = self.input_shape().to_vec();
        if numel(shape) != numel(&old) {
            return Err(Error::Shape {
                op: "with_input_shape",
                lhs: old,
                rhs: shape.to_vec(),
            });
        }
        let mut full = vec![self.len()];
        full.extend_from_slice(shape);
        let inputs = self.inputs.reshape(full)?;
        let channels = channels_of(shape);
        let norm = if channels == self.norm.channels() {
            self.norm
        } else {
            NormStats::identity(channels)
        };
        Ok(LabeledDataset { inputs, norm, ..self })
    }

    /// Per-channel mean and population std of this dataset.
    pub fn fit_stats(&self) -> NormStats {
        let shape = self.input_shape();
        let channels = channels_of(shape);
        let per_channel = numel(shape) / channels;
        let mut sum = vec![0.0f64; channels];
        let mut sq = vec![0.0f64; channels];
        for (i, &v) in self.inputs.data().iter().enumerate() {
            let c = (i / per_channel) % channels;
            sum[c] += v.as_f64();
        }
        let count = (self.len() * per_channel) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        for (i, &v) in self.inputs.data().iter().enumerate() {
            let c = (i / per_channel) % channels;
            let d = v.as_f64() - mean[c];
            sq[c] += d * d;
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        NormStats { mean, std }
    }

    /// Standardizes with statistics fitted on this dataset.
    pub fn normalize(self) -> Self {
        let stats = self.fit_stats();
        self.normalize_with(&stats)
    }

    /// Standardizes with externally fitted statistics (e.g. a test split
    /// normalized by its training split).
    pub fn normalize_with(self, stats: &NormStats) -> Self {
        let shape = self.input_shape().to_vec();
        let channels = channels_of(&shape);
        assert_eq!(channels, stats.channels(), "normalization channel count");
        let per_channel = numel(&shape) / channels;
        let mut inputs = self.inputs;
        for (i, v) in inputs.data_mut().iter_mut().enumerate() {
            let c = (i / per_channel) % channels;
            *v = T::of((v.as_f64() - stats.mean[c]) / stats.std[c]);
        }
        LabeledDataset {
            inputs,
            norm: stats.clone(),
            ..self
        }
    }

    /// Average pooling of `(c, h, w)` examples by `factor` in both
    /// spatial axes. Labels are unchanged.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        let shape = self.input_shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::contract(format!("downsample needs (c, h, w) examples, got {shape:?}")));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::contract(format!("{h}×{w} is not divisible by factor {factor}")));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (ho, wo) = (h / factor, w / factor);
        let area = T::of_usize(factor * factor);
        let src = self.inputs.data();
        let mut out = Vec::with_capacity(self.len() * c * ho * wo);
        for plane in 0..self.len() * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = T::zero();
                    for dy in 0..factor {
                        for dx in 0..factor {
                            acc += src[base + (oy * factor + dy) * w + ox * factor + dx];
                        }
                    }
                    out.push(acc / area);
                }
            }
        }
        let inputs = Tensor::new(vec![self.len(), c, ho, wo], out)?;
        Ok(LabeledDataset {
            inputs,
            labels: self.labels.clone(),
            classes: self.classes,
            name: self.name.clone(),
            norm: self.norm.clone(),
        })
    }
}
