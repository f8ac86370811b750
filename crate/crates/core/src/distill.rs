//! Contrastive-divergence distillation of a synthetic set.
//!
//! Each step draws an anchor `(θ⁺_k, θ⁺_{k+T})` from the buffer, runs a
//! Langevin chain from `θ⁺_k` on the current synthetic set to get `θ⁻`,
//! and moves the synthetic inputs down the gradient of
//! `E(θ⁺, D̃) − E(θ⁻, D̃)`. Both parameter points are constants of that
//! gradient; nothing is differentiated through the chain.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::autodiff::{Graph, Var};
use crate::coreset::{init_coreset, InitStrategy, SyntheticSet};
use crate::data::LabeledDataset;
use crate::energy::{energy_graph, EnergySpec};
use crate::error::{Error, Result};
use crate::langevin::{langevin_sample, LangevinConfig};
use crate::models::{forward_graph, ModelSpec, ParamVector};
use crate::scalar::Scalar;
use crate::seed::SeedTree;
use crate::tensor::Tensor;
use crate::trajectory::{Anchor, Buffer};

pub const DEFAULT_SET_MOMENTUM: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    /// T: epochs between the anchor and θ⁺.
    pub horizon: usize,
    /// Chain settings; the seed is replaced per chain.
    pub langevin: LangevinConfig,
    pub k_max: usize,
    pub iterations: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Energy on the synthetic set, independent of the buffer's training loss.
    pub energy: EnergySpec,
    pub anchors_per_step: usize,
    pub ipc: usize,
    pub init: InitStrategy,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            horizon: 2,
            // noiseless chains: at desk scale √α·η swamps the (α/2)∇E drift
            langevin: LangevinConfig {
                noise_temperature: 0.0,
                ..LangevinConfig::default()
            },
            k_max: 4,
            iterations: 200,
            lr: 1.0,
            momentum: DEFAULT_SET_MOMENTUM,
            energy: EnergySpec::CrossEntropy,
            anchors_per_step: 4,
            ipc: 1,
            init: InitStrategy::Real,
            log_every: 50,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::contract("horizon T must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::contract("iterations must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::contract(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::contract(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.anchors_per_step == 0 || self.ipc == 0 || self.log_every == 0 {
            return Err(Error::contract("anchors_per_step, ipc and log_every must be positive"));
        }
        self.energy.validate()?;
        self.langevin.validate()
    }
}

/// `E(θ⁺, D̃) − E(θ⁻, D̃)` and its gradient with respect to the inputs.
#[derive(Clone, Debug)]
pub struct CdLoss<T> {
    pub loss: T,
    pub e_plus: T,
    pub e_minus: T,
    pub grad_inputs: Tensor<T>,
}

/// Builds `(loss, E⁺, E⁻)` on `g` with both parameter vectors as constants.
pub fn cd_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    espec: &EnergySpec,
    mspec: &ModelSpec,
    theta_plus: &ParamVector<T>,
    theta_minus: &ParamVector<T>,
    inputs: Var,
    labels: &[usize],
) -> Result<(Var, Var, Var)> {
    if theta_plus.spec() != mspec || theta_minus.spec() != mspec {
        return Err(Error::contract("θ⁺ and θ⁻ must both match the model spec"));
    }
    let energy_at = |g: &mut Graph<T>, theta: &ParamVector<T>| -> Result<Var> {
        let p = g.constant(Tensor::from_vec(theta.values().to_vec()))?;
        let z = forward_graph(g, mspec, p, inputs)?;
        energy_graph(espec, g, z, labels)
    };
    let e_plus = energy_at(g, theta_plus)?;
    let e_minus = energy_at(g, theta_minus)?;
    let loss = g.sub(e_plus, e_minus)?;
    Ok((loss, e_plus, e_minus))
}

pub fn cd_loss<T: Scalar>(
    theta_plus: &ParamVector<T>,
    theta_minus: &ParamVector<T>,
    dset: &SyntheticSet<T>,
    espec: &EnergySpec,
    mspec: &ModelSpec,
) -> Result<CdLoss<T>> {
    let labels = dset.label_indices()?;
    let mut g = Graph::new();
    let x = g.leaf(dset.inputs().clone())?;
    let (loss, e_plus, e_minus) = cd_loss_graph(&mut g, espec, mspec, theta_plus, theta_minus, x, &labels)?;
    g.backward(loss)?;
    Ok(CdLoss {
        loss: g.value(loss).item()?,
        e_plus: g.value(e_plus).item()?,
        e_minus: g.value(e_minus).item()?,
        grad_inputs: g.take_grad(x).expect("inputs are a leaf"),
    })
}

/// One anchor and the θ⁻ its chain produced.
#[derive(Clone, Debug)]
pub struct CdPair<T> {
    pub anchor: Anchor<T>,
    pub theta_minus: ParamVector<T>,
    pub trace: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub iteration: usize,
    pub loss: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub grad_norm: f64,
}

impl StepMetrics {
    pub const TSV_HEADER: &'static str = "iteration\tloss\te_plus\te_minus\tgrad_norm";

    pub fn tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.iteration, self.loss, self.e_plus, self.e_minus, self.grad_norm
        )
    }
}

/// Optimizer state for one distillation run: the set and its momentum.
#[derive(Clone, Debug)]
pub struct Distiller<T> {
    cfg: DistillConfig,
    spec: ModelSpec,
    set: SyntheticSet<T>,
    velocity: Vec<T>,
    iteration: usize,
}

impl<T: Scalar> Distiller<T> {
    pub fn new(set: SyntheticSet<T>, spec: &ModelSpec, cfg: &DistillConfig) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        if set.input_shape() != spec.input_shape.as_slice() || set.classes() != spec.classes {
            return Err(Error::contract(format!(
                "synthetic set {:?} × {} classes does not fit model input {:?} × {} classes",
                set.input_shape(),
                set.classes(),
                spec.input_shape,
                spec.classes
            )));
        }
        Ok(Distiller {
            velocity: vec![T::zero(); set.inputs().len()],
            cfg: cfg.clone(),
            spec: spec.clone(),
            set,
            iteration: 0,
        })
    }

    pub fn set(&self) -> &SyntheticSet<T> {
        &self.set
    }

    pub fn into_set(self) -> SyntheticSet<T> {
        self.set
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Draws `anchors_per_step` anchors and runs one chain from each.
    pub fn draw(&self, buf: &Buffer<T>, rng: &mut impl Rng) -> Result<Vec<CdPair<T>>> {
        if buf.spec() != Some(&self.spec) {
            return Err(Error::contract("buffer trajectories were recorded with a different model"));
        }
        let mut draws = Vec::with_capacity(self.cfg.anchors_per_step);
        for _ in 0..self.cfg.anchors_per_step {
            let anchor = buf.sample_anchor(rng, self.cfg.k_max, self.cfg.horizon)?;
            let seed: u64 = rng.random();
            draws.push((anchor, seed));
        }
        draws
            .into_par_iter()
            .map(|(anchor, seed)| {
                let lcfg = LangevinConfig {
                    seed,
                    ..self.cfg.langevin.clone()
                };
                let (theta_minus, trace) = langevin_sample(&anchor.theta_k, &self.cfg.energy, &self.spec, &self.set, &lcfg)?;
                Ok(CdPair {
                    anchor,
                    theta_minus,
                    trace,
                })
            })
            .collect()
    }

    /// Mean CD loss over `pairs` and its input gradient.
    pub fn objective(&self, pairs: &[CdPair<T>]) -> Result<CdLoss<T>> {
        if pairs.is_empty() {
            return Err(Error::contract("no anchor pairs"));
        }
        let mut total: Option<CdLoss<T>> = None;
        for pair in pairs {
            let c = cd_loss(&pair.anchor.theta_plus, &pair.theta_minus, &self.set, &self.cfg.energy, &self.spec)?;
            total = Some(match total {
                None => c,
                Some(mut t) => {
                    t.loss += c.loss;
                    t.e_plus += c.e_plus;
                    t.e_minus += c.e_minus;
                    for (a, b) in t.grad_inputs.data_mut().iter_mut().zip(c.grad_inputs.data()) {
                        *a += *b;
                    }
                    t
                }
            });
        }
        let mut t = total.expect("non-empty");
        if pairs.len() > 1 {
            let inv = T::one() / T::of_usize(pairs.len());
            t.loss *= inv;
            t.e_plus *= inv;
            t.e_minus *= inv;
            t.grad_inputs = t.grad_inputs.map(|v| v * inv);
        }
        Ok(t)
    }

    /// One momentum step on the inputs from precomputed pairs. If the step
    /// would leave a non-finite pixel, nothing changes and a step error is
    /// returned.
    pub fn apply(&mut self, pairs: &[CdPair<T>]) -> Result<StepMetrics> {
        let obj = self.objective(pairs)?;
        let iteration = self.iteration;
        let (lr, mu) = (T::of(self.cfg.lr), T::of(self.cfg.momentum));
        let velocity: Vec<T> = self
            .velocity
            .iter()
            .zip(obj.grad_inputs.data())
            .map(|(&v, &g)| mu * v + g)
            .collect();
        let mut inputs = self.set.inputs().clone();
        for (x, &v) in inputs.data_mut().iter_mut().zip(&velocity) {
            *x -= lr * v;
        }
        if !inputs.is_finite() || velocity.iter().any(|v| !v.is_finite()) {
            return Err(Error::Step { iteration });
        }
        self.set.set_inputs(inputs)?;
        self.velocity = velocity;
        self.iteration += 1;
        Ok(StepMetrics {
            iteration,
            loss: obj.loss.as_f64(),
            e_plus: obj.e_plus.as_f64(),
            e_minus: obj.e_minus.as_f64(),
            grad_norm: obj.grad_inputs.norm().as_f64(),
        })
    }

    pub fn step(&mut self, buf: &Buffer<T>, rng: &mut impl Rng) -> Result<StepMetrics> {
        let pairs = self.draw(buf, rng)?;
        self.apply(&pairs)
    }
}

#[derive(Clone, Debug)]
pub struct Distilled<T> {
    pub set: SyntheticSet<T>,
    pub history: Vec<StepMetrics>,
}

/// A run stopped by an error; `set` is the last good state.
#[derive(Debug)]
pub struct Aborted<T> {
    pub error: Error,
    pub set: Option<SyntheticSet<T>>,
    pub history: Vec<StepMetrics>,
}

impl<T> fmt::Display for Aborted<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "distillation stopped after {} steps: {}", self.history.len(), self.error)
    }
}

/// The stratified initial set for `cfg`.
pub fn initial_set<T: Scalar>(dataset: &LabeledDataset<T>, cfg: &DistillConfig, mspec: &ModelSpec) -> Result<SyntheticSet<T>> {
    let mut set = init_coreset(dataset, cfg.ipc, cfg.init, SeedTree::new(cfg.seed).child("init").seed())?;
    set.provenance.model = Some(mspec.kind.to_string());
    Ok(set)
}

/// Runs `cfg.iterations` steps from the initial set, calling
/// `on_step(metrics, set)` after each one.
pub fn distill_with<T: Scalar>(
    dataset: &LabeledDataset<T>,
    buf: &Buffer<T>,
    cfg: &DistillConfig,
    mspec: &ModelSpec,
    mut on_step: impl FnMut(&StepMetrics, &SyntheticSet<T>),
) -> std::result::Result<Distilled<T>, Aborted<T>> {
    let abort = |error, set, history| Aborted { error, set, history };
    let init = initial_set(dataset, cfg, mspec).map_err(|e| abort(e, None, Vec::new()))?;
    let mut d = Distiller::new(init, mspec, cfg).map_err(|e| abort(e, None, Vec::new()))?;
    let mut rng = SeedTree::new(cfg.seed).child("distill").rng();
    let mut history = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        match d.step(buf, &mut rng) {
            Ok(m) => {
                on_step(&m, d.set());
                history.push(m);
            }
            Err(e) => return Err(abort(e, Some(d.into_set()), history)),
        }
    }
    Ok(Distilled { set: d.into_set(), history })
}

pub fn distill<T: Scalar>(
    dataset: &LabeledDataset<T>,
    buf: &Buffer<T>,
    cfg: &DistillConfig,
    mspec: &ModelSpec,
) -> std::result::Result<Distilled<T>, Aborted<T>> {
    distill_with(dataset, buf, cfg, mspec, |_, _| {})
}
