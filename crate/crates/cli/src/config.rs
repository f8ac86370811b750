//! Run configuration: `[section]` headers and `key = value` lines, with
//! command-line overrides applied on top, resolved into typed settings.
//! The resolved form is written back out so a run can be repeated from
//! its snapshot alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bpc::distill::DistillConfig;
use bpc::energy::EnergySpec;
use bpc::eval::{EvalConfig, DEFAULT_EVAL_SEEDS};
use bpc::langevin::LangevinConfig;
use bpc::models::{ArchKind, ModelSpec};
use bpc::seed::SeedTree;
use bpc::train::TrainConfig;
use bpc::trajectory::DEFAULT_BUFFER_SIZE;

use crate::CliError;

pub const SNAPSHOT_FILE: &str = "config.ini";
pub const OUT_ENV: &str = "BPC_OUT";

/// Raw `section.key → value` pairs in file order; later writes win.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: Vec<(String, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config(format!("line {}: unterminated section header", n + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", n + 1)))?;
            if section.is_empty() {
                return Err(CliError::config(format!("line {}: key outside any section", n + 1)));
            }
            raw.set(&format!("{section}.{}", k.trim()), v.trim());
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    /// Applies a `section.key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .filter(|(k, _)| k.contains('.'))
            .ok_or_else(|| CliError::config(format!("override {pair:?} is not section.key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }
}

/// Reads keys off a [`RawConfig`], remembering which were consumed so
/// that unknown keys can be reported.
struct Reader<'a> {
    raw: &'a RawConfig,
    used: Vec<&'a str>,
}

impl<'a> Reader<'a> {
    fn get_raw(&mut self, key: &str) -> Option<&'a str> {
        let (k, v) = self.raw.entries.iter().find(|(k, _)| k == key)?;
        self.used.push(k.as_str());
        Some(v.as_str())
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.get_raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::config(format!("{key} = {v:?} is not a valid value"))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError> {
        match self.get_raw(key) {
            None => Ok(default),
            Some("") => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::config(format!("{key} = {v:?} has a bad entry {s:?}")))
                })
                .collect(),
        }
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.get_raw(key).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    fn finish(self) -> Result<(), CliError> {
        let unknown: Vec<&str> = self
            .raw
            .entries
            .iter()
            .map(|(k, _)| k.as_str())
            .filter(|k| !self.used.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::config(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Blobs,
    Idx,
}

impl FromStr for DatasetKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "blobs" => Ok(DatasetKind::Blobs),
            "idx" => Ok(DatasetKind::Idx),
            _ => Err(()),
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetKind::Blobs => "blobs",
            DatasetKind::Idx => "idx",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub kind: DatasetKind,
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub spread: f64,
    /// Seed of the training blobs; the test blobs use the next one.
    pub data_seed: u64,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Keep only the first `limit` training examples; 0 keeps all.
    pub limit: usize,
    pub downsample: usize,
    /// Per-example shape override, e.g. `1,4,4` to feed 16-d blobs to a convnet.
    pub shape: Vec<usize>,
    pub normalize: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub arch: ArchKind,
    /// Hidden sizes (mlp kinds) or block channels (convnets); empty keeps
    /// the architecture default.
    pub widths: Vec<usize>,
}

impl ModelConfig {
    pub fn spec(&self, input_shape: &[usize], classes: usize) -> ModelSpec {
        let mut spec = ModelSpec::default_for(self.arch, input_shape, classes);
        if !self.widths.is_empty() {
            spec.widths = self.widths.clone();
        }
        spec
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BufferConfig {
    pub trajectories: usize,
    pub train: TrainConfig,
    pub loss: EnergySpec,
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSection {
    pub eval: EvalConfig,
    pub coreset: PathBuf,
    pub archs: Vec<ArchKind>,
    pub losses: Vec<EnergySpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub buffer: BufferConfig,
    pub distill: DistillConfig,
    pub distill_dir: PathBuf,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Resolves `raw` against the defaults. `env_out` stands in for the
    /// `BPC_OUT` variable so tests need not touch the process environment.
    pub fn resolve(raw: &RawConfig, env_out: Option<&str>) -> Result<Self, CliError> {
        let mut r = Reader {
            raw,
            used: Vec::new(),
        };
        let seed: u64 = r.get("run.seed", 0)?;
        let out = r
            .path("run.out")
            .or_else(|| env_out.filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        // 0: one worker per core
        let jobs: usize = r.get("run.jobs", 0)?;

        let kind: DatasetKind = r.get("data.dataset", DatasetKind::Blobs)?;
        let data = DataConfig {
            kind,
            classes: r.get("data.classes", 3)?,
            dim: r.get("data.dim", 2)?,
            per_class: r.get("data.per_class", 100)?,
            test_per_class: r.get("data.test_per_class", 100)?,
            spread: r.get("data.spread", 1.0)?,
            data_seed: r.get("data.seed", 1)?,
            images: r.path("data.images"),
            labels: r.path("data.labels"),
            test_images: r.path("data.test_images"),
            test_labels: r.path("data.test_labels"),
            limit: r.get("data.limit", 0)?,
            downsample: r.get("data.downsample", 1)?,
            shape: r.list("data.shape", Vec::new())?,
            normalize: r.get("data.normalize", kind == DatasetKind::Idx)?,
        };
        let model = ModelConfig {
            arch: r.get("model.arch", ArchKind::Mlp)?,
            widths: r.list("model.widths", Vec::new())?,
        };

        let tdef = TrainConfig::default();
        let buffer = BufferConfig {
            trajectories: r.get("buffer.trajectories", DEFAULT_BUFFER_SIZE)?,
            train: TrainConfig {
                lr: r.get("buffer.lr", tdef.lr)?,
                momentum: r.get("buffer.momentum", tdef.momentum)?,
                batch_size: r.get("buffer.batch_size", tdef.batch_size)?,
                epochs: r.get("buffer.epochs", tdef.epochs)?,
            },
            loss: r.get("buffer.loss", EnergySpec::CrossEntropy)?,
            dir: r.path("buffer.dir").unwrap_or_else(|| out.join("buffer")),
        };

        let ddef = DistillConfig::default();
        let distill = DistillConfig {
            horizon: r.get("distill.horizon", ddef.horizon)?,
            langevin: LangevinConfig {
                alpha: r.get("distill.alpha", ddef.langevin.alpha)?,
                steps: r.get("distill.langevin_steps", ddef.langevin.steps)?,
                noise_temperature: r.get("distill.noise_temp", ddef.langevin.noise_temperature)?,
                seed: 0,
            },
            k_max: r.get("distill.k_max", ddef.k_max)?,
            iterations: r.get("distill.iters", ddef.iterations)?,
            lr: r.get("distill.lr", ddef.lr)?,
            momentum: r.get("distill.momentum", ddef.momentum)?,
            energy: r.get("distill.energy", ddef.energy)?,
            anchors_per_step: r.get("distill.anchors_per_step", ddef.anchors_per_step)?,
            ipc: r.get("distill.ipc", ddef.ipc)?,
            init: r.get("distill.init", ddef.init)?,
            log_every: r.get("distill.log_every", ddef.log_every)?,
            seed: SeedTree::new(seed).child("distill").seed(),
        };
        let distill_dir = r.path("distill.dir").unwrap_or_else(|| out.join("distill"));

        let edef = EvalConfig::default();
        let eval = EvalSection {
            eval: EvalConfig {
                train: TrainConfig {
                    lr: r.get("eval.lr", edef.train.lr)?,
                    momentum: r.get("eval.momentum", edef.train.momentum)?,
                    batch_size: r.get("eval.batch_size", edef.train.batch_size)?,
                    epochs: r.get("eval.epochs", edef.train.epochs)?,
                },
                n_seeds: r.get("eval.seeds", DEFAULT_EVAL_SEEDS)?,
                seed: SeedTree::new(seed).child("eval").seed(),
            },
            coreset: r.path("eval.coreset").unwrap_or_else(|| distill_dir.join(crate::commands::CORESET_FILE)),
            archs: r.list("eval.archs", ArchKind::ALL.to_vec())?,
            losses: r.list("eval.losses", vec![EnergySpec::CrossEntropy, EnergySpec::margin()])?,
        };
        r.finish()?;

        let cfg = RunConfig {
            seed,
            out,
            jobs,
            data,
            model,
            buffer,
            distill,
            distill_dir,
            eval,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        if d.downsample == 0 {
            return Err(CliError::config("data.downsample must be at least 1"));
        }
        if d.kind == DatasetKind::Blobs && (d.per_class == 0 || d.test_per_class == 0) {
            return Err(CliError::config("blobs need positive per_class and test_per_class"));
        }
        if d.kind == DatasetKind::Idx && (d.images.is_none() || d.labels.is_none()) {
            return Err(CliError::config("the idx dataset needs data.images and data.labels"));
        }
        if d.test_images.is_some() != d.test_labels.is_some() {
            return Err(CliError::config("data.test_images and data.test_labels go together"));
        }
        if self.buffer.trajectories == 0 {
            return Err(CliError::config("buffer.trajectories must be at least 1"));
        }
        self.buffer.train.validate()?;
        self.buffer.loss.validate()?;
        self.distill.validate()?;
        self.eval.eval.validate()?;
        if self.eval.archs.is_empty() || self.eval.losses.is_empty() {
            return Err(CliError::config("eval.archs and eval.losses must not be empty"));
        }
        Ok(())
    }

    /// Buffer seed of trajectory `i`.
    pub fn trajectory_seed(&self, i: usize) -> u64 {
        SeedTree::new(self.seed).child("buffer").index(i as u64).seed()
    }

    /// Every setting, defaults included, in the file format `resolve` reads.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let list = |xs: &[String]| xs.join(",");
        let mut w = |line: String| {
            s.push_str(&line);
            s.push('\n');
        };
        w("[run]".into());
        w(format!("seed = {}", self.seed));
        w(format!("out = {}", self.out.display()));
        w(format!("jobs = {}", self.jobs));
        let d = &self.data;
        w(String::new());
        w("[data]".into());
        w(format!("dataset = {}", d.kind));
        w(format!("classes = {}", d.classes));
        w(format!("dim = {}", d.dim));
        w(format!("per_class = {}", d.per_class));
        w(format!("test_per_class = {}", d.test_per_class));
        w(format!("spread = {}", d.spread));
        w(format!("seed = {}", d.data_seed));
        w(format!("images = {}", opt(&d.images)));
        w(format!("labels = {}", opt(&d.labels)));
        w(format!("test_images = {}", opt(&d.test_images)));
        w(format!("test_labels = {}", opt(&d.test_labels)));
        w(format!("limit = {}", d.limit));
        w(format!("downsample = {}", d.downsample));
        w(format!("shape = {}", list(&d.shape.iter().map(|v| v.to_string()).collect::<Vec<_>>())));
        w(format!("normalize = {}", d.normalize));
        w(String::new());
        w("[model]".into());
        w(format!("arch = {}", self.model.arch));
        w(format!("widths = {}", list(&self.model.widths.iter().map(|v| v.to_string()).collect::<Vec<_>>())));
        let b = &self.buffer;
        w(String::new());
        w("[buffer]".into());
        w(format!("trajectories = {}", b.trajectories));
        w(format!("epochs = {}", b.train.epochs));
        w(format!("lr = {}", b.train.lr));
        w(format!("momentum = {}", b.train.momentum));
        w(format!("batch_size = {}", b.train.batch_size));
        w(format!("loss = {}", b.loss));
        w(format!("dir = {}", b.dir.display()));
        let c = &self.distill;
        w(String::new());
        w("[distill]".into());
        w(format!("ipc = {}", c.ipc));
        w(format!("init = {}", c.init));
        w(format!("energy = {}", c.energy));
        w(format!("horizon = {}", c.horizon));
        w(format!("k_max = {}", c.k_max));
        w(format!("iters = {}", c.iterations));
        w(format!("lr = {}", c.lr));
        w(format!("momentum = {}", c.momentum));
        w(format!("alpha = {}", c.langevin.alpha));
        w(format!("langevin_steps = {}", c.langevin.steps));
        w(format!("noise_temp = {}", c.langevin.noise_temperature));
        w(format!("anchors_per_step = {}", c.anchors_per_step));
        w(format!("log_every = {}", c.log_every));
        w(format!("dir = {}", self.distill_dir.display()));
        let e = &self.eval;
        w(String::new());
        w("[eval]".into());
        w(format!("seeds = {}", e.eval.n_seeds));
        w(format!("epochs = {}", e.eval.train.epochs));
        w(format!("lr = {}", e.eval.train.lr));
        w(format!("momentum = {}", e.eval.train.momentum));
        w(format!("batch_size = {}", e.eval.train.batch_size));
        w(format!("coreset = {}", e.coreset.display()));
        w(format!("archs = {}", list(&e.archs.iter().map(|a| a.to_string()).collect::<Vec<_>>())));
        w(format!("losses = {}", list(&e.losses.iter().map(|l| l.to_string()).collect::<Vec<_>>())));
        s
    }

    /// Writes the snapshot into `dir`, creating it if needed.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir).map_err(bpc::Error::from)?;
        let path = dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, self.to_ini()).map_err(bpc::Error::from)?;
        Ok(path)
    }
}

/// One-line description of the resolved distillation settings.
pub fn describe_distill(c: &DistillConfig) -> String {
    let mut s = String::new();
    write!(
        s,
        "ipc={} T={} k_max={} L={} alpha={} beta={} lr={} anchors={} iters={}",
        c.ipc,
        c.horizon,
        c.k_max,
        c.langevin.steps,
        c.langevin.alpha,
        c.langevin.noise_temperature,
        c.lr,
        c.anchors_per_step,
        c.iterations
    )
    .expect("string write");
    s
}
