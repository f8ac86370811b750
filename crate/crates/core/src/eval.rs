//! Retraining-based evaluation of coresets.
//!
//! Every evaluation trains fresh networks on the candidate examples only,
//! one per seed, and scores them on a held-out set. Seeds and the training
//! recipe come from [`EvalConfig`] so reports for different candidates
//! are directly comparable.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::coreset::{stratified_indices, Provenance, SyntheticSet};
use crate::data::LabeledDataset;
use crate::distill::{distill, DistillConfig};
use crate::energy::EnergySpec;
use crate::error::{Error, Result};
use crate::models::{accuracy, ModelSpec};
use crate::scalar::Scalar;
use crate::seed::SeedTree;
use crate::tensor::Tensor;
use crate::train::{train, TrainConfig};
use crate::trajectory::Buffer;

pub const DEFAULT_EVAL_SEEDS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub n_seeds: usize,
    /// Root of the per-run seeds.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train: TrainConfig {
                lr: 0.05,
                momentum: 0.9,
                batch_size: 256,
                epochs: 300,
            },
            n_seeds: DEFAULT_EVAL_SEEDS,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn seeds(&self) -> Vec<u64> {
        let root = SeedTree::new(self.seed).child("eval");
        (0..self.n_seeds as u64).map(|i| root.index(i).seed()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::contract("evaluation needs at least one seed"));
        }
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub provenance: Option<Provenance>,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for one seed.
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn new(
        label: impl Into<String>,
        spec: &ModelSpec,
        train: &TrainConfig,
        provenance: Option<Provenance>,
        seeds: Vec<u64>,
        accuracies: Vec<f64>,
    ) -> Self {
        let (mean, std) = mean_std(&accuracies);
        EvalReport {
            label: label.into(),
            spec: spec.clone(),
            train: train.clone(),
            provenance,
            seeds,
            accuracies,
            mean,
            std,
        }
    }

    /// True when `mean` and `std` agree with the per-seed list.
    pub fn is_consistent(&self) -> bool {
        let (mean, std) = mean_std(&self.accuracies);
        self.seeds.len() == self.accuracies.len() && mean == self.mean && std == self.std
    }

    pub const TSV_HEADER: &'static str = "label\tarch\tseed\taccuracy";

    /// One row per seed.
    pub fn tsv_rows(&self) -> String {
        let mut out = String::new();
        for (s, a) in self.seeds.iter().zip(&self.accuracies) {
            writeln!(out, "{}\t{}\t{s}\t{a}", self.label, self.spec.kind).expect("string write");
        }
        out
    }

    /// A `[label]` block of `key = value` lines.
    pub fn to_block(&self) -> String {
        let mut out = format!("[{}]\n", self.label);
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
        kv("arch", self.spec.kind.to_string());
        kv("input_shape", join(&self.spec.input_shape));
        kv("widths", join(&self.spec.widths));
        kv("classes", self.spec.classes.to_string());
        kv("train_lr", self.train.lr.to_string());
        kv("train_momentum", self.train.momentum.to_string());
        kv("train_batch_size", self.train.batch_size.to_string());
        kv("train_epochs", self.train.epochs.to_string());
        if let Some(p) = &self.provenance {
            kv("source", p.source.clone());
            kv("init", p.init.to_string());
            kv("init_seed", p.seed.to_string());
            kv("distilled_with", p.model.clone().unwrap_or_else(|| "none".into()));
        }
        kv("seeds", join(&self.seeds));
        kv("accuracies", join(&self.accuracies));
        kv("mean", self.mean.to_string());
        kv("std", self.std.to_string());
        out
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn check_compatible(shape: &[usize], classes: usize, spec: &ModelSpec, test_shape: &[usize], test_classes: usize) -> Result<()> {
    spec.validate()?;
    if shape != spec.input_shape.as_slice() || test_shape != shape {
        return Err(Error::contract(format!(
            "input shapes differ: examples {shape:?}, model {:?}, test {test_shape:?}",
            spec.input_shape
        )));
    }
    if classes != spec.classes || test_classes != classes {
        return Err(Error::contract(format!(
            "class counts differ: examples {classes}, model {}, test {test_classes}",
            spec.classes
        )));
    }
    Ok(())
}

/// Trains one network per seed on `(inputs, labels)` and scores it on `test`.
/// Labels need not be balanced.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_examples<T: Scalar>(
    label: &str,
    inputs: &Tensor<T>,
    labels: &[usize],
    classes: usize,
    mspec: &ModelSpec,
    test: &LabeledDataset<T>,
    cfg: &EvalConfig,
    provenance: Option<Provenance>,
) -> Result<EvalReport> {
    cfg.validate()?;
    check_compatible(&inputs.shape()[1..], classes, mspec, test.input_shape(), test.classes())?;
    let seeds = cfg.seeds();
    let accuracies = seeds
        .par_iter()
        .map(|&seed| {
            let p = train(mspec, &EnergySpec::CrossEntropy, inputs, labels, &cfg.train, seed, |_, _| Ok(()))?;
            accuracy(mspec, &p, test.inputs(), test.labels())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EvalReport::new(label, mspec, &cfg.train, provenance, seeds, accuracies))
}

pub fn evaluate_coreset<T: Scalar>(
    label: &str,
    coreset: &SyntheticSet<T>,
    mspec: &ModelSpec,
    test: &LabeledDataset<T>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let labels = coreset.label_indices()?;
    evaluate_examples(
        label,
        coreset.inputs(),
        &labels,
        coreset.classes(),
        mspec,
        test,
        cfg,
        Some(coreset.provenance.clone()),
    )
}

/// The same protocol with the whole real training set as the candidate.
pub fn evaluate_full<T: Scalar>(
    train_set: &LabeledDataset<T>,
    mspec: &ModelSpec,
    test: &LabeledDataset<T>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    evaluate_examples(
        "full",
        train_set.inputs(),
        train_set.labels(),
        train_set.classes(),
        mspec,
        test,
        cfg,
        None,
    )
}

/// A fresh class-stratified random real subset for every seed. The subset
/// keeps the dataset's order, so `ipc` equal to every class size is exactly
/// [`evaluate_full`].
pub fn random_baseline<T: Scalar>(
    dset: &LabeledDataset<T>,
    ipc: usize,
    mspec: &ModelSpec,
    test: &LabeledDataset<T>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    check_compatible(dset.input_shape(), dset.classes(), mspec, test.input_shape(), test.classes())?;
    let seeds = cfg.seeds();
    let accuracies = seeds
        .par_iter()
        .map(|&seed| {
            let mut idx = stratified_indices(dset, ipc, SeedTree::new(seed).child("subset").seed())?;
            idx.sort_unstable();
            let sub = dset.subset(&idx)?;
            let p = train(mspec, &EnergySpec::CrossEntropy, sub.inputs(), sub.labels(), &cfg.train, seed, |_, _| Ok(()))?;
            accuracy(mspec, &p, test.inputs(), test.labels())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EvalReport::new("random", mspec, &cfg.train, None, seeds, accuracies))
}

#[derive(Clone, Debug)]
pub struct ArchCell {
    pub report: EvalReport,
    /// The architecture the coreset was distilled with.
    pub is_source: bool,
}

/// One report per architecture; all specs are checked before any training.
pub fn cross_architecture_grid<T: Scalar>(
    coreset: &SyntheticSet<T>,
    specs: &[ModelSpec],
    test: &LabeledDataset<T>,
    cfg: &EvalConfig,
) -> Result<Vec<ArchCell>> {
    for s in specs {
        check_compatible(coreset.input_shape(), coreset.classes(), s, test.input_shape(), test.classes())?;
    }
    let source = coreset.provenance.model.as_deref();
    specs
        .iter()
        .map(|s| {
            Ok(ArchCell {
                report: evaluate_coreset(s.kind.as_str(), coreset, s, test, cfg)?,
                is_source: source == Some(s.kind.as_str()),
            })
        })
        .collect()
}

/// Rows are the training loss of the buffer, columns the synthetic energy.
#[derive(Clone, Debug)]
pub struct CrossLossGrid {
    pub losses: Vec<EnergySpec>,
    pub cells: Vec<Vec<EvalReport>>,
}

impl CrossLossGrid {
    /// Fraction of rows whose diagonal cell has the row's highest mean.
    pub fn diagonal_dominance(&self) -> f64 {
        let n = self.cells.len();
        let rows = (0..n)
            .filter(|&i| self.cells[i].iter().all(|c| c.mean <= self.cells[i][i].mean))
            .count();
        rows as f64 / n as f64
    }

    pub fn diagonal_mean(&self) -> f64 {
        let n = self.cells.len();
        (0..n).map(|i| self.cells[i][i].mean).sum::<f64>() / n as f64
    }

    /// Mean over off-diagonal cells; `NaN` for a 1×1 grid.
    pub fn off_diagonal_mean(&self) -> f64 {
        let n = self.cells.len();
        let off: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.cells[i][j].mean)
            .collect();
        off.iter().sum::<f64>() / off.len() as f64
    }

    pub fn render(&self) -> String {
        let mut out = String::from("loss_D \\ loss_synthetic");
        for l in &self.losses {
            write!(out, "\t{l}").expect("string write");
        }
        out.push('\n');
        for (l, row) in self.losses.iter().zip(&self.cells) {
            write!(out, "{l}").expect("string write");
            for c in row {
                write!(out, "\t{:.4} ± {:.4}", c.mean, c.std).expect("string write");
            }
            out.push('\n');
        }
        writeln!(
            out,
            "diagonal_mean\t{:.4}\noff_diagonal_mean\t{:.4}\ndiagonal_dominance\t{:.4}",
            self.diagonal_mean(),
            self.off_diagonal_mean(),
            self.diagonal_dominance()
        )
        .expect("string write");
        out
    }
}

/// Distills once per `(ℓ_D, ℓ_D̃)` pair and evaluates every result.
/// `buffers` maps each training loss to a buffer recorded with it.
pub fn cross_loss_grid<T: Scalar>(
    dataset: &LabeledDataset<T>,
    buffers: &[(EnergySpec, &Buffer<T>)],
    losses: &[EnergySpec],
    distill_cfg: &DistillConfig,
    mspec: &ModelSpec,
    test: &LabeledDataset<T>,
    cfg: &EvalConfig,
) -> Result<CrossLossGrid> {
    let mut rows = Vec::with_capacity(losses.len());
    for l in losses {
        let buf = buffers
            .iter()
            .find(|(k, _)| k == l)
            .map(|(_, b)| *b)
            .ok_or_else(|| Error::contract(format!("no buffer recorded with loss {l}")))?;
        if buf.loss() != Some(l) {
            return Err(Error::contract(format!("buffer listed under {l} was recorded with another loss")));
        }
        rows.push(buf);
    }
    let cells: Vec<(usize, usize)> = (0..losses.len())
        .flat_map(|i| (0..losses.len()).map(move |j| (i, j)))
        .collect();
    let reports = cells
        .par_iter()
        .map(|&(i, j)| {
            let dcfg = DistillConfig {
                energy: losses[j],
                ..distill_cfg.clone()
            };
            let out = distill(dataset, rows[i], &dcfg, mspec).map_err(|a| a.error)?;
            evaluate_coreset(&format!("{}->{}", losses[i], losses[j]), &out.set, mspec, test, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = reports.into_iter();
    let cells = (0..losses.len())
        .map(|_| it.by_ref().take(losses.len()).collect())
        .collect();
    Ok(CrossLossGrid {
        losses: losses.to_vec(),
        cells,
    })
}

/// Side-by-side summary of several reports, plus the first-minus-second
/// difference of means when there are exactly two.
pub fn render_comparison(reports: &[EvalReport]) -> String {
    let mut out = String::from("method\tarch\tmean\tstd\tper_seed\n");
    for r in reports {
        writeln!(
            out,
            "{}\t{}\t{:.4}\t{:.4}\t{}",
            r.label,
            r.spec.kind,
            r.mean,
            r.std,
            r.accuracies.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(",")
        )
        .expect("string write");
    }
    if let [a, b] = reports {
        writeln!(out, "difference\t{} - {}\t{:+.4}", a.label, b.label, a.mean - b.mean).expect("string write");
    }
    out
}
