//! Mini-batch SGD with heavy-ball momentum on real (or coreset) data.

use rand::seq::SliceRandom;

use crate::energy::{energy_eval, EnergySpec};
use crate::error::{Error, Result};
use crate::models::{init_params, ModelSpec, ParamVector};
use crate::scalar::Scalar;
use crate::seed::SeedTree;
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            momentum: DEFAULT_MOMENTUM,
            batch_size: 32,
            epochs: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::contract(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::contract(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch size must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Trains a fresh `init_params(spec, seed)` network.
///
/// `on_epoch(e, θ)` runs once before training with `e = 0` and after every
/// epoch `e ≥ 1`. Example order is reshuffled every epoch from `seed`.
/// Any non-finite loss or parameter aborts with the epoch being run.
pub fn train<T: Scalar>(
    spec: &ModelSpec,
    loss: &EnergySpec,
    inputs: &Tensor<T>,
    labels: &[usize],
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &ParamVector<T>) -> Result<()>,
) -> Result<ParamVector<T>> {
    cfg.validate()?;
    spec.validate()?;
    loss.validate()?;
    let n = labels.len();
    if n == 0 || inputs.shape().first() != Some(&n) {
        return Err(Error::contract(format!(
            "{} labels for inputs of shape {:?}",
            n,
            inputs.shape()
        )));
    }
    let mut params: ParamVector<T> = init_params(spec, seed);
    on_epoch(0, &params)?;
    let mut rng = SeedTree::new(seed).child("shuffle").rng();
    let mut order: Vec<usize> = (0..n).collect();
    let mut velocity = vec![T::zero(); params.len()];
    let (lr, mu) = (T::of(cfg.lr), T::of(cfg.momentum));
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let x = inputs.select_rows(batch)?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let eval = energy_eval(loss, spec, &params, &x, &y, true, false).map_err(|e| diverged(e, epoch))?;
            let grad = eval.grad_params.expect("requested");
            for ((p, v), g) in params.values_mut().iter_mut().zip(&mut velocity).zip(grad) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
            if !params.is_finite() {
                return Err(Error::Training { epoch });
            }
        }
        on_epoch(epoch, &params)?;
    }
    Ok(params)
}

fn diverged(e: Error, epoch: usize) -> Error {
    if e.is_numeric() {
        Error::Training { epoch }
    } else {
        e
    }
}

/// Mean loss of `params` over a whole dataset, evaluated in chunks.
pub fn dataset_loss<T: Scalar>(
    spec: &ModelSpec,
    loss: &EnergySpec,
    params: &ParamVector<T>,
    inputs: &Tensor<T>,
    labels: &[usize],
) -> Result<f64> {
    const CHUNK: usize = 1024;
    let mut total = 0.0;
    let mut start = 0;
    while start < labels.len() {
        let count = CHUNK.min(labels.len() - start);
        let x = inputs.rows(start, count)?;
        let e = energy_eval(loss, spec, params, &x, &labels[start..start + count], false, false)?;
        total += e.value.as_f64() * count as f64;
        start += count;
    }
    Ok(total / labels.len() as f64)
}
