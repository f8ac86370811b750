//! Train and test splits as described by the `[data]` section.

use bpc::data::{channels_of, gen_blobs, load_idx_raw, NormStats};
use bpc::LabeledDataset64;

use crate::config::{DataConfig, DatasetKind};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Split {
    Train,
    Test,
}

/// Downsampled, reshaped and (for training) truncated, but not normalized.
fn raw_split(d: &DataConfig, split: Split) -> Result<LabeledDataset64, CliError> {
    let mut ds = match d.kind {
        DatasetKind::Blobs => {
            let (n, seed, tag) = match split {
                Split::Train => (d.per_class, d.data_seed, "train"),
                Split::Test => (d.test_per_class, d.data_seed.wrapping_add(1), "test"),
            };
            gen_blobs(n, d.classes, d.dim, d.spread, seed)?.rename(format!("blobs-{}x{}-{tag}", d.classes, d.dim))
        }
        DatasetKind::Idx => {
            let (images, labels) = match split {
                Split::Train => (d.images.as_deref(), d.labels.as_deref()),
                Split::Test => (d.test_images.as_deref(), d.test_labels.as_deref()),
            };
            match (images, labels) {
                (Some(i), Some(l)) => load_idx_raw(i, l)?,
                _ => return Err(CliError::config("no test split configured (data.test_images, data.test_labels)")),
            }
        }
    };
    if d.downsample > 1 {
        ds = ds.downsample(d.downsample)?;
    }
    if !d.shape.is_empty() {
        ds = ds.with_input_shape(&d.shape)?;
    }
    if split == Split::Train && d.limit > 0 && d.limit < ds.len() {
        ds = ds.take(d.limit)?;
    }
    Ok(ds)
}

/// The training split, standardized by its own statistics when
/// `normalize` is set.
pub fn load_train(d: &DataConfig) -> Result<LabeledDataset64, CliError> {
    let ds = raw_split(d, Split::Train)?;
    Ok(if d.normalize { ds.normalize() } else { ds })
}

/// The test split standardized with `stats`, which always come from a
/// training split (or from a coreset that recorded them).
pub fn load_test(d: &DataConfig, stats: &NormStats) -> Result<LabeledDataset64, CliError> {
    let ds = raw_split(d, Split::Test)?;
    let channels = channels_of(ds.input_shape());
    if channels != stats.channels() {
        return Err(CliError::config(format!(
            "normalization stats have {} channels, test inputs {channels}",
            stats.channels()
        )));
    }
    Ok(ds.normalize_with(stats))
}

pub fn load_splits(d: &DataConfig) -> Result<(LabeledDataset64, LabeledDataset64), CliError> {
    let train = load_train(d)?;
    let test = load_test(d, train.norm())?;
    Ok((train, test))
}

pub fn has_test_split(d: &DataConfig) -> bool {
    d.kind == DatasetKind::Blobs || d.test_images.is_some()
}
