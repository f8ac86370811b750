//! The learnable synthetic set and its on-disk format.
//!
//! BPCS layout (little-endian):
//!
//! ```text
//! "BPCS" | version u16 | meta_len u32 | meta (UTF-8 key=value lines)
//!        | inputs f32 × (n · prod(input_shape)) | one-hot labels u8 × (n · classes)
//!        | crc32 u32 over every preceding byte
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::binio::{join, Meta, Reader};
use crate::data::{LabeledDataset, NormStats};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_from;
use crate::tensor::{numel, Tensor};

pub const CORESET_MAGIC: &[u8; 4] = b"BPCS";
pub const CORESET_VERSION: u16 = 1;

/// Largest coreset accepted for distillation, as a fraction of the real set.
pub const MAX_CORESET_FRACTION: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitStrategy {
    /// Class-stratified random real examples.
    Real,
    /// Standard normal pixels.
    Noise,
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitStrategy::Real => "real",
            InitStrategy::Noise => "noise",
        })
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(InitStrategy::Real),
            "noise" => Ok(InitStrategy::Noise),
            _ => Err(Error::contract(format!("unknown init strategy {s:?}"))),
        }
    }
}

/// Where a synthetic set came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub init: InitStrategy,
    pub seed: u64,
    pub source: String,
    pub norm: NormStats,
    /// Architecture the set was distilled with, if any.
    pub model: Option<String>,
}

/// Pseudo-coreset: `classes · ipc` examples, grouped by class, with fixed
/// one-hot labels. Only the inputs are ever modified.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSet<T> {
    inputs: Tensor<T>,
    one_hot: Vec<u8>,
    classes: usize,
    ipc: usize,
    pub provenance: Provenance,
}

impl<T: Scalar> SyntheticSet<T> {
    /// Builds a set from integer labels; every class must appear equally often.
    pub fn new(inputs: Tensor<T>, labels: &[usize], classes: usize, provenance: Provenance) -> Result<Self> {
        let mut one_hot = vec![0u8; labels.len() * classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::contract(format!("label {y} outside [0, {classes})")));
            }
            one_hot[i * classes + y] = 1;
        }
        Self::from_one_hot(inputs, one_hot, classes, provenance)
    }

    pub fn from_one_hot(inputs: Tensor<T>, one_hot: Vec<u8>, classes: usize, provenance: Provenance) -> Result<Self> {
        if classes < 2 {
            return Err(Error::contract("a synthetic set needs at least 2 classes"));
        }
        let n = inputs.shape().first().copied().unwrap_or(0);
        if inputs.shape().len() < 2 || n == 0 || one_hot.len() != n * classes {
            return Err(Error::Shape {
                op: "synthetic_set",
                lhs: inputs.shape().to_vec(),
                rhs: vec![one_hot.len() / classes.max(1), classes],
            });
        }
        inputs.check_finite("synthetic_set")?;
        let mut set = SyntheticSet {
            inputs,
            one_hot,
            classes,
            ipc: 0,
            provenance,
        };
        let labels = set.label_indices()?;
        let mut counts = vec![0usize; classes];
        for &y in &labels {
            counts[y] += 1;
        }
        if counts.iter().any(|&c| c != counts[0]) || counts[0] == 0 {
            return Err(Error::contract(format!("unbalanced synthetic set: per-class counts {counts:?}")));
        }
        set.ipc = counts[0];
        Ok(set)
    }

    /// The whole of `dset` as a set (used for evaluation baselines).
    pub fn from_dataset(dset: &LabeledDataset<T>, init: InitStrategy, seed: u64) -> Result<Self> {
        Self::new(
            dset.inputs().clone(),
            dset.labels(),
            dset.classes(),
            Provenance {
                init,
                seed,
                source: dset.name().to_string(),
                norm: dset.norm().clone(),
                model: None,
            },
        )
    }

    pub fn inputs(&self) -> &Tensor<T> {
        &self.inputs
    }

    /// Replaces the inputs; shape must match and values must be finite.
    pub fn set_inputs(&mut self, inputs: Tensor<T>) -> Result<()> {
        if inputs.shape() != self.inputs.shape() {
            return Err(Error::Shape {
                op: "set_inputs",
                lhs: self.inputs.shape().to_vec(),
                rhs: inputs.shape().to_vec(),
            });
        }
        inputs.check_finite("set_inputs")?;
        self.inputs = inputs;
        Ok(())
    }

    pub fn one_hot(&self) -> &[u8] {
        &self.one_hot
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn ipc(&self) -> usize {
        self.ipc
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Class index per example; errors if a label row is not one-hot.
    pub fn label_indices(&self) -> Result<Vec<usize>> {
        self.one_hot
            .chunks(self.classes)
            .enumerate()
            .map(|(i, row)| {
                let hot: Vec<usize> = (0..self.classes).filter(|&j| row[j] != 0).collect();
                if hot.len() != 1 || row[hot[0]] != 1 {
                    return Err(Error::contract(format!("label row {i} is not one-hot: {row:?}")));
                }
                Ok(hot[0])
            })
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for row in self.one_hot.chunks(self.classes) {
            if let Some(j) = row.iter().position(|&b| b == 1) {
                counts[j] += 1;
            }
        }
        counts
    }

    pub fn quantized(&self) -> Self {
        SyntheticSet {
            inputs: self.inputs.map(|v| v.quantize()),
            ..self.clone()
        }
    }

    /// Serialized BPCS bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = Meta::new();
        let p = &self.provenance;
        meta.put("classes", self.classes)
            .put("ipc", self.ipc)
            .put("count", self.len())
            .put("input_shape", join(self.input_shape()))
            .put("norm_mean", join(&p.norm.mean))
            .put("norm_std", join(&p.norm.std))
            .put("init", p.init)
            .put("seed", p.seed)
            .put("source", &p.source);
        if let Some(model) = &p.model {
            meta.put("model", model);
        }
        let mut out = Vec::with_capacity(16 + self.inputs.len() * 4 + self.one_hot.len());
        out.extend_from_slice(CORESET_MAGIC);
        out.extend_from_slice(&CORESET_VERSION.to_le_bytes());
        meta.write(&mut out);
        for v in self.inputs.data() {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        out.extend_from_slice(&self.one_hot);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CORESET_MAGIC {
            return Err(Error::format("not a BPCS coreset file (bad magic)"));
        }
        if bytes.len() < 10 {
            return Err(Error::Corruption("BPCS file truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Corruption("BPCS checksum mismatch".into()));
        }
        let mut r = Reader::new(body, "BPCS file");
        r.take(4)?;
        let version = r.u16()?;
        if version != CORESET_VERSION {
            return Err(Error::format(format!("unsupported BPCS version {version}")));
        }
        let meta = Meta::read(&mut r)?;
        let classes: usize = meta.parse("classes")?;
        let count: usize = meta.parse("count")?;
        let shape: Vec<usize> = meta.list("input_shape")?;
        let mut full = vec![count];
        full.extend_from_slice(&shape);
        let values = r.f32s(numel(&full))?;
        let one_hot = r.take(count * classes)?.to_vec();
        if r.remaining() != 0 {
            return Err(Error::Corruption("trailing bytes after BPCS payload".into()));
        }
        let inputs = Tensor::new(full, values.into_iter().map(|v| T::of(v as f64)).collect())?;
        let provenance = Provenance {
            init: meta.parse("init")?,
            seed: meta.parse("seed")?,
            source: meta.get("source")?.to_string(),
            norm: NormStats {
                mean: meta.list("norm_mean")?,
                std: meta.list("norm_std")?,
            },
            model: meta.get_opt("model").map(str::to_string),
        };
        let set = Self::from_one_hot(inputs, one_hot, classes, provenance)
            .map_err(|e| Error::format(format!("BPCS payload invalid: {e}")))?;
        let ipc: usize = meta.parse("ipc")?;
        if ipc != set.ipc {
            return Err(Error::format(format!("BPCS header says ipc {ipc}, labels say {}", set.ipc)));
        }
        Ok(set)
    }
}

pub fn save_coreset<T: Scalar>(path: impl AsRef<Path>, set: &SyntheticSet<T>) -> Result<()> {
    fs::write(path, set.to_bytes())?;
    Ok(())
}

pub fn load_coreset<T: Scalar>(path: impl AsRef<Path>) -> Result<SyntheticSet<T>> {
    SyntheticSet::from_bytes(&fs::read(path)?)
}

/// Indices of `ipc` distinct random examples per class, grouped by class.
pub fn stratified_indices<T: Scalar>(dset: &LabeledDataset<T>, ipc: usize, seed: u64) -> Result<Vec<usize>> {
    if ipc == 0 {
        return Err(Error::contract("ipc must be positive"));
    }
    let mut rng = rng_from(seed);
    let mut picked = Vec::with_capacity(ipc * dset.classes());
    for class in 0..dset.classes() {
        let mut pool = dset.indices_of_class(class);
        if pool.len() < ipc {
            return Err(Error::contract(format!(
                "class {class} has {} examples, {ipc} requested",
                pool.len()
            )));
        }
        pool.shuffle(&mut rng);
        picked.extend_from_slice(&pool[..ipc]);
    }
    Ok(picked)
}

/// `ipc` distinct random examples per class, grouped by class.
pub fn stratified_subset<T: Scalar>(dset: &LabeledDataset<T>, ipc: usize, seed: u64) -> Result<SyntheticSet<T>> {
    let picked = stratified_indices(dset, ipc, seed)?;
    let labels: Vec<usize> = picked.iter().map(|&i| dset.labels()[i]).collect();
    SyntheticSet::new(
        dset.inputs().select_rows(&picked)?,
        &labels,
        dset.classes(),
        Provenance {
            init: InitStrategy::Real,
            seed,
            source: dset.name().to_string(),
            norm: dset.norm().clone(),
            model: None,
        },
    )
}

/// Starting point for distillation. Enforces `classes · ipc ≤ |D| / 10`.
pub fn init_coreset<T: Scalar>(
    dset: &LabeledDataset<T>,
    ipc: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<SyntheticSet<T>> {
    let size = ipc * dset.classes();
    if ipc == 0 || size * MAX_CORESET_FRACTION > dset.len() {
        return Err(Error::contract(format!(
            "coreset of {size} examples is not ≤ |D|/{MAX_CORESET_FRACTION} for |D| = {}",
            dset.len()
        )));
    }
    match strategy {
        InitStrategy::Real => stratified_subset(dset, ipc, seed),
        InitStrategy::Noise => {
            let mut rng = rng_from(seed);
            let mut shape = vec![size];
            shape.extend_from_slice(dset.input_shape());
            let data = (0..numel(&shape))
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::of(z)
                })
                .collect();
            let labels: Vec<usize> = (0..dset.classes()).flat_map(|c| std::iter::repeat_n(c, ipc)).collect();
            SyntheticSet::new(
                Tensor::new(shape, data)?,
                &labels,
                dset.classes(),
                Provenance {
                    init: InitStrategy::Noise,
                    seed,
                    source: dset.name().to_string(),
                    norm: dset.norm().clone(),
                    model: None,
                },
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;

    fn blobs() -> LabeledDataset<f64> {
        gen_blobs(20, 10, 3, 0.5, 5).unwrap()
    }

    #[test]
    fn one_example_per_class_at_ipc_one() {
        let set = init_coreset(&blobs(), 1, InitStrategy::Real, 0).unwrap();
        assert_eq!(set.len(), 10);
        assert_eq!(set.label_indices().unwrap(), (0..10).collect::<Vec<_>>());
        assert_eq!(set.ipc(), 1);
    }

    #[test]
    fn real_init_copies_training_examples_at_file_precision() {
        let d = blobs();
        let set = init_coreset(&d, 2, InitStrategy::Real, 3).unwrap();
        let loaded = SyntheticSet::<f64>::from_bytes(&set.to_bytes()).unwrap();
        let dim = 3;
        for (i, x) in loaded.inputs().data().chunks(dim).enumerate() {
            let y = set.label_indices().unwrap()[i];
            let found = d
                .inputs()
                .data()
                .chunks(dim)
                .zip(d.labels())
                .any(|(row, &label)| label == y && row.iter().zip(x).all(|(a, b)| a.quantize().to_bits() == b.to_bits()));
            assert!(found, "synthetic example {i} is not a training example");
        }
    }

    #[test]
    fn size_bound_is_enforced() {
        assert!(init_coreset(&blobs(), 3, InitStrategy::Real, 0).is_err());
        assert!(init_coreset(&blobs(), 2, InitStrategy::Noise, 0).is_ok());
    }

    #[test]
    fn too_few_class_members_is_a_contract_error() {
        let d = blobs();
        assert!(matches!(stratified_subset(&d, 21, 0).unwrap_err(), Error::Contract(_)));
        assert!(stratified_subset(&d, 20, 0).is_ok());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let set = init_coreset(&blobs(), 1, InitStrategy::Noise, 9).unwrap();
        let a = dir.path().join("a.bpcs");
        let b = dir.path().join("b.bpcs");
        save_coreset(&a, &set).unwrap();
        let loaded: SyntheticSet<f64> = load_coreset(&a).unwrap();
        save_coreset(&b, &loaded).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(loaded, set.quantized());
    }

    #[test]
    fn tampering_is_detected() {
        let set = init_coreset(&blobs(), 1, InitStrategy::Noise, 9).unwrap();
        let bytes = set.to_bytes();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(SyntheticSet::<f64>::from_bytes(&bad_magic).unwrap_err(), Error::Format(_)));
        let mut flipped = bytes.clone();
        flipped[40] ^= 0x10;
        assert!(matches!(SyntheticSet::<f64>::from_bytes(&flipped).unwrap_err(), Error::Corruption(_)));
        assert!(SyntheticSet::<f64>::from_bytes(&bytes[..bytes.len() - 7]).is_err());
    }

    #[test]
    fn unbalanced_or_non_one_hot_labels_are_rejected() {
        let prov = Provenance {
            init: InitStrategy::Noise,
            seed: 0,
            source: "t".into(),
            norm: NormStats::identity(1),
            model: None,
        };
        let x = Tensor::<f64>::zeros(&[3, 2]);
        assert!(SyntheticSet::new(x.clone(), &[0, 0, 1], 2, prov.clone()).is_err());
        let x = Tensor::<f64>::zeros(&[2, 2]);
        assert!(SyntheticSet::from_one_hot(x.clone(), vec![1, 1, 0, 1], 2, prov.clone()).is_err());
        assert!(SyntheticSet::from_one_hot(x, vec![1, 0, 0, 1], 2, prov).is_ok());
    }
}
