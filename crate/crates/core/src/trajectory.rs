//! Recorded training trajectories on real data and the buffer that holds them.
//!
//! BPCT layout (little-endian):
//!
//! ```text
//! "BPCT" | version u16 | meta_len u32 | meta (UTF-8 key=value lines)
//!        | snapshot count u32 | snapshots f32 × (count · parameter_count)
//! ```
//!
//! The buffer directory holds one BPCT file per trajectory and `index.tsv`
//! with lines `<id>\t<filename>\t<crc32>\t<epochs>\t<seed>`; the checksum
//! covers the whole trajectory file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::binio::{join, Meta, Reader};
use crate::data::LabeledDataset;
use crate::energy::EnergySpec;
use crate::error::{Error, Result};
use crate::models::{accuracy, ArchKind, Activation, ModelSpec, ParamVector};
use crate::scalar::Scalar;
use crate::train::{dataset_loss, train, TrainConfig};

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"BPCT";
pub const TRAJECTORY_VERSION: u16 = 1;
pub const INDEX_FILE: &str = "index.tsv";
pub const DEFAULT_BUFFER_SIZE: usize = 20;

/// Per-epoch parameter snapshots of one seeded training run. Snapshot 0 is
/// the initialization, snapshot `e` the parameters after epoch `e`. Values
/// are held at `f32` precision so a save/load round trip is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub spec: ModelSpec,
    pub loss: EnergySpec,
    pub train: TrainConfig,
    pub seed: u64,
    pub dataset: String,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    snapshots: Vec<ParamVector<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn snapshots(&self) -> &[ParamVector<T>] {
        &self.snapshots
    }

    pub fn epochs(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn last(&self) -> &ParamVector<T> {
        self.snapshots.last().expect("at least two snapshots")
    }

    /// Sets the held-out accuracy of the final snapshot.
    pub fn measure_test(&mut self, test: &LabeledDataset<T>) -> Result<()> {
        self.test_accuracy = Some(accuracy(&self.spec, self.last(), test.inputs(), test.labels())?);
        Ok(())
    }

    /// Training loss of every snapshot on `dataset`.
    pub fn loss_curve(&self, dataset: &LabeledDataset<T>) -> Result<Vec<f64>> {
        self.snapshots
            .iter()
            .map(|p| dataset_loss(&self.spec, &self.loss, p, dataset.inputs(), dataset.labels()))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = Meta::new();
        put_spec(&mut meta, &self.spec);
        meta.put("loss", self.loss)
            .put("optimizer", "sgd-momentum")
            .put("lr", self.train.lr)
            .put("momentum", self.train.momentum)
            .put("batch_size", self.train.batch_size)
            .put("epochs", self.epochs())
            .put("seed", self.seed)
            .put("dataset", &self.dataset)
            .put("train_accuracy", self.train_accuracy);
        if let Some(acc) = self.test_accuracy {
            meta.put("test_accuracy", acc);
        }
        let pc = self.spec.parameter_count();
        let mut out = Vec::with_capacity(14 + self.snapshots.len() * pc * 4);
        out.extend_from_slice(TRAJECTORY_MAGIC);
        out.extend_from_slice(&TRAJECTORY_VERSION.to_le_bytes());
        meta.write(&mut out);
        out.extend_from_slice(&(self.snapshots.len() as u32).to_le_bytes());
        for s in &self.snapshots {
            for v in s.values() {
                out.extend_from_slice(&v.as_f32().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != TRAJECTORY_MAGIC {
            return Err(Error::format("not a BPCT trajectory file (bad magic)"));
        }
        let mut r = Reader::new(bytes, "BPCT file");
        r.take(4)?;
        let version = r.u16()?;
        if version != TRAJECTORY_VERSION {
            return Err(Error::format(format!("unsupported BPCT version {version}")));
        }
        let meta = Meta::read(&mut r)?;
        let spec = get_spec(&meta)?;
        let epochs: usize = meta.parse("epochs")?;
        let count = r.u32()? as usize;
        if count != epochs + 1 {
            return Err(Error::format(format!("{count} snapshots for {epochs} epochs")));
        }
        let pc = spec.parameter_count();
        let mut snapshots = Vec::with_capacity(count);
        for _ in 0..count {
            let values = r.f32s(pc)?.into_iter().map(|v| T::of(v as f64)).collect();
            snapshots.push(ParamVector::new(&spec, values)?);
        }
        if r.remaining() != 0 {
            return Err(Error::Corruption(format!("{} trailing bytes after BPCT snapshots", r.remaining())));
        }
        Ok(Trajectory {
            loss: meta.get("loss")?.parse().map_err(|_| Error::format("bad loss in BPCT metadata"))?,
            train: TrainConfig {
                lr: meta.parse("lr")?,
                momentum: meta.parse("momentum")?,
                batch_size: meta.parse("batch_size")?,
                epochs,
            },
            seed: meta.parse("seed")?,
            dataset: meta.get("dataset")?.to_string(),
            train_accuracy: meta.parse("train_accuracy")?,
            test_accuracy: meta.get_opt("test_accuracy").map(|_| meta.parse("test_accuracy")).transpose()?,
            spec,
            snapshots,
        })
    }
}

pub(crate) fn put_spec(meta: &mut Meta, spec: &ModelSpec) {
    meta.put("arch", spec.kind)
        .put("input_shape", join(&spec.input_shape))
        .put("classes", spec.classes)
        .put("widths", join(&spec.widths))
        .put("activation", spec.activation)
        .put("parameter_count", spec.parameter_count());
}

pub(crate) fn get_spec(meta: &Meta) -> Result<ModelSpec> {
    let bad = |what: &str| Error::format(format!("bad {what} in metadata"));
    let spec = ModelSpec {
        kind: meta.get("arch")?.parse::<ArchKind>().map_err(|_| bad("arch"))?,
        input_shape: meta.list("input_shape")?,
        classes: meta.parse("classes")?,
        widths: meta.list("widths")?,
        activation: meta.get("activation")?.parse::<Activation>().map_err(|_| bad("activation"))?,
    };
    spec.validate().map_err(|_| bad("model spec"))?;
    if meta.parse::<usize>("parameter_count")? != spec.parameter_count() {
        return Err(bad("parameter_count"));
    }
    Ok(spec)
}

/// Trains `init_params(spec, seed)` on `dataset`, keeping every epoch.
pub fn record_trajectory<T: Scalar>(
    dataset: &LabeledDataset<T>,
    spec: &ModelSpec,
    loss: &EnergySpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Trajectory<T>> {
    if dataset.is_empty() {
        return Err(Error::contract("cannot record a trajectory on an empty dataset"));
    }
    let mut snapshots = Vec::with_capacity(cfg.epochs + 1);
    train(spec, loss, dataset.inputs(), dataset.labels(), cfg, seed, |_, p| {
        snapshots.push(p.quantized());
        Ok(())
    })?;
    let last = snapshots.last().expect("initial snapshot");
    let train_accuracy = accuracy(spec, last, dataset.inputs(), dataset.labels())?;
    Ok(Trajectory {
        spec: spec.clone(),
        loss: *loss,
        train: cfg.clone(),
        seed,
        dataset: dataset.name().to_string(),
        train_accuracy,
        test_accuracy: None,
        snapshots,
    })
}

/// Fraction of consecutive pairs where the value does not increase.
pub fn monotone_fraction(curve: &[f64]) -> f64 {
    if curve.len() < 2 {
        return 1.0;
    }
    let good = curve.windows(2).filter(|w| w[1] <= w[0]).count();
    good as f64 / (curve.len() - 1) as f64
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub id: String,
    pub file: String,
    pub crc: u32,
    pub epochs: usize,
    pub seed: u64,
}

impl IndexEntry {
    fn line(&self) -> String {
        format!("{}\t{}\t{:08x}\t{}\t{}\n", self.id, self.file, self.crc, self.epochs, self.seed)
    }

    fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::format(format!("bad index line {line:?}"));
        if f.len() != 5 {
            return Err(bad());
        }
        Ok(IndexEntry {
            id: f[0].to_string(),
            file: f[1].to_string(),
            crc: u32::from_str_radix(f[2], 16).map_err(|_| bad())?,
            epochs: f[3].parse().map_err(|_| bad())?,
            seed: f[4].parse().map_err(|_| bad())?,
        })
    }
}

/// θ⁺_k (the Langevin start) and θ⁺ = θ⁺_{k+T} from one trajectory.
#[derive(Clone, Debug)]
pub struct Anchor<T> {
    pub trajectory: usize,
    pub k: usize,
    pub theta_k: ParamVector<T>,
    pub theta_plus: ParamVector<T>,
}

/// A collection of trajectories sharing one architecture and loss,
/// optionally backed by a directory.
#[derive(Clone, Debug)]
pub struct Buffer<T> {
    dir: Option<PathBuf>,
    entries: Vec<IndexEntry>,
    trajectories: Vec<Trajectory<T>>,
}

impl<T: Scalar> Buffer<T> {
    pub fn in_memory() -> Self {
        Buffer {
            dir: None,
            entries: Vec::new(),
            trajectories: Vec::new(),
        }
    }

    /// Starts an empty on-disk buffer, replacing any existing index.
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let buf = Buffer {
            dir: Some(dir),
            entries: Vec::new(),
            trajectories: Vec::new(),
        };
        buf.write_index()?;
        Ok(buf)
    }

    /// Loads every indexed trajectory, verifying checksums.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let text = fs::read_to_string(dir.join(INDEX_FILE))?;
        let mut buf = Buffer {
            dir: Some(dir),
            entries: Vec::new(),
            trajectories: Vec::new(),
        };
        for line in text.lines().filter(|l| !l.is_empty()) {
            buf.entries.push(IndexEntry::parse(line)?);
        }
        for i in 0..buf.entries.len() {
            let t = buf.read_entry(&buf.entries[i])?;
            buf.check_compatible(&t)?;
            buf.trajectories.push(t);
        }
        Ok(buf)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn trajectories(&self) -> &[Trajectory<T>] {
        &self.trajectories
    }

    pub fn spec(&self) -> Option<&ModelSpec> {
        self.trajectories.first().map(|t| &t.spec)
    }

    pub fn loss(&self) -> Option<&EnergySpec> {
        self.trajectories.first().map(|t| &t.loss)
    }

    fn check_compatible(&self, t: &Trajectory<T>) -> Result<()> {
        if let Some(first) = self.trajectories.first() {
            if first.spec != t.spec || first.loss != t.loss {
                return Err(Error::contract(format!(
                    "buffer holds {} / {} trajectories, got {} / {}",
                    first.spec.kind, first.loss, t.spec.kind, t.loss
                )));
            }
        }
        Ok(())
    }

    /// Appends `t` and returns its id. On disk, the trajectory file is fully
    /// written before the index mentions it.
    pub fn save_trajectory(&mut self, t: Trajectory<T>) -> Result<String> {
        self.check_compatible(&t)?;
        let id = format!("traj-{:04}", self.entries.len());
        let file = format!("{id}.bpct");
        let bytes = t.to_bytes();
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join(&file), &bytes)?;
        }
        self.entries.push(IndexEntry {
            id: id.clone(),
            file,
            crc: crc32fast::hash(&bytes),
            epochs: t.epochs(),
            seed: t.seed,
        });
        if let Err(e) = self.write_index() {
            self.entries.pop();
            return Err(e);
        }
        self.trajectories.push(t);
        Ok(id)
    }

    /// Re-reads trajectory `id` from its backing store.
    pub fn load_trajectory(&self, id: &str) -> Result<Trajectory<T>> {
        let pos = self
            .entries
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| Error::contract(format!("no trajectory {id:?} in buffer")))?;
        match &self.dir {
            Some(_) => self.read_entry(&self.entries[pos]),
            None => Ok(self.trajectories[pos].clone()),
        }
    }

    fn read_entry(&self, entry: &IndexEntry) -> Result<Trajectory<T>> {
        let dir = self.dir.as_ref().expect("disk-backed");
        let bytes = fs::read(dir.join(&entry.file))?;
        let crc = crc32fast::hash(&bytes);
        if crc != entry.crc {
            return Err(Error::Corruption(format!(
                "{}: checksum {crc:08x} does not match index {:08x}",
                entry.file, entry.crc
            )));
        }
        let t = Trajectory::from_bytes(&bytes)?;
        if t.epochs() != entry.epochs || t.seed != entry.seed {
            return Err(Error::Corruption(format!("{} disagrees with its index line", entry.file)));
        }
        Ok(t)
    }

    fn write_index(&self) -> Result<()> {
        if let Some(dir) = &self.dir {
            let text: String = self.entries.iter().map(IndexEntry::line).collect();
            write_atomic(&dir.join(INDEX_FILE), text.as_bytes())?;
        }
        Ok(())
    }

    /// Draws a trajectory uniformly, then `k` uniformly from `[0, k_max]`.
    pub fn sample_anchor(&self, rng: &mut impl Rng, k_max: usize, horizon: usize) -> Result<Anchor<T>> {
        if self.is_empty() {
            return Err(Error::contract("cannot sample from an empty buffer"));
        }
        let need = k_max + horizon;
        if let Some(short) = self.trajectories.iter().find(|t| t.epochs() < need) {
            return Err(Error::contract(format!(
                "k_max + T = {need} exceeds a trajectory of {} epochs",
                short.epochs()
            )));
        }
        let trajectory = rng.random_range(0..self.len());
        let k = rng.random_range(0..=k_max);
        let snaps = self.trajectories[trajectory].snapshots();
        Ok(Anchor {
            trajectory,
            k,
            theta_k: snaps[k].clone(),
            theta_plus: snaps[k + horizon].clone(),
        })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}
