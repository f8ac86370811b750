//! Fixed classification-loss energies `E(θ, D̃)`.
//!
//! All three kinds are means over examples, so the scale does not depend
//! on how many examples the set holds. They double as the training losses
//! used for recording trajectories and retraining.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, Var};
use crate::coreset::SyntheticSet;
use crate::error::{Error, Result};
use crate::models::{forward_graph, ModelSpec, ParamVector};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;
pub const DEFAULT_MARGIN: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergySpec {
    /// `−(1/n) Σᵢ log softmax(zᵢ)[yᵢ]`
    CrossEntropy,
    /// `−(1/n) Σᵢ (1 − pᵢ)^γ log pᵢ` with `pᵢ = softmax(zᵢ)[yᵢ]`
    Focal { gamma: f64 },
    /// `(1/n) Σᵢ Σ_{j≠yᵢ} max(0, margin − (zᵢ[yᵢ] − zᵢ[j])) / C`
    MultiMargin { margin: f64 },
}

impl EnergySpec {
    pub fn focal() -> Self {
        EnergySpec::Focal {
            gamma: DEFAULT_FOCAL_GAMMA,
        }
    }

    pub fn margin() -> Self {
        EnergySpec::MultiMargin { margin: DEFAULT_MARGIN }
    }

    /// Short name used on the command line: `ce`, `focal` or `margin`.
    pub fn kind(&self) -> &'static str {
        match self {
            EnergySpec::CrossEntropy => "ce",
            EnergySpec::Focal { .. } => "focal",
            EnergySpec::MultiMargin { .. } => "margin",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EnergySpec::CrossEntropy => Ok(()),
            EnergySpec::Focal { gamma } if gamma.is_finite() && gamma >= 0.0 => Ok(()),
            EnergySpec::MultiMargin { margin } if margin.is_finite() && margin > 0.0 => Ok(()),
            other => Err(Error::contract(format!("invalid energy hyperparameter in {other}"))),
        }
    }
}

/// `ce`, `focal[:gamma]`, `margin[:margin]`.
impl FromStr for EnergySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse()
                    .map_err(|_| Error::contract(format!("bad energy hyperparameter {a:?}")))
            })
        };
        let spec = match kind {
            "ce" if arg.is_none() => EnergySpec::CrossEntropy,
            "focal" => EnergySpec::Focal {
                gamma: num(DEFAULT_FOCAL_GAMMA)?,
            },
            "margin" => EnergySpec::MultiMargin {
                margin: num(DEFAULT_MARGIN)?,
            },
            _ => return Err(Error::contract(format!("unknown energy {s:?} (ce | focal | margin)"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for EnergySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergySpec::CrossEntropy => f.write_str("ce"),
            EnergySpec::Focal { gamma } => write!(f, "focal:{gamma}"),
            EnergySpec::MultiMargin { margin } => write!(f, "margin:{margin}"),
        }
    }
}

/// Records the energy of `(batch, C)` logits against integer labels.
pub fn energy_graph<T: Scalar>(espec: &EnergySpec, g: &mut Graph<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    if labels.is_empty() {
        return Err(Error::contract("energy of an empty set"));
    }
    match *espec {
        EnergySpec::CrossEntropy => {
            let lp = g.log_softmax(logits)?;
            let picked = g.gather(lp, labels)?;
            let m = g.mean(picked)?;
            g.neg(m)
        }
        EnergySpec::Focal { gamma } => {
            let lp = g.log_softmax(logits)?;
            let picked = g.gather(lp, labels)?;
            let p = g.exp(picked)?;
            let miss = g.scale(p, -T::one())?;
            let miss = g.shift(miss, T::one())?;
            let weight = g.pow(miss, T::of(gamma))?;
            let weighted = g.mul(weight, picked)?;
            let m = g.mean(weighted)?;
            g.neg(m)
        }
        EnergySpec::MultiMargin { margin } => {
            let shape = g.shape(logits).to_vec();
            let (n, c) = (shape[0], shape[1]);
            let correct = g.gather(logits, labels)?;
            let gap = g.sub_col(logits, correct)?;
            let shifted = g.shift(gap, T::of(margin))?;
            let hinge = g.relu(shifted)?;
            let mut mask = vec![T::one(); n * c];
            for (i, &y) in labels.iter().enumerate() {
                mask[i * c + y] = T::zero();
            }
            let mask = g.constant(Tensor::new(vec![n, c], mask)?)?;
            let off = g.mul(hinge, mask)?;
            let total = g.sum(off)?;
            g.scale(total, T::one() / T::of_usize(n * c))
        }
    }
}

/// Energy value and whichever gradients were requested.
#[derive(Clone, Debug)]
pub struct EnergyEval<T> {
    pub value: T,
    pub grad_params: Option<Vec<T>>,
    pub grad_inputs: Option<Tensor<T>>,
}

fn check_params<T: Scalar>(mspec: &ModelSpec, params: &ParamVector<T>) -> Result<()> {
    if params.spec() != mspec {
        return Err(Error::contract(format!(
            "parameters were built for {:?}, not {:?}",
            params.spec().kind,
            mspec.kind
        )));
    }
    Ok(())
}

/// Evaluates the energy on raw `(inputs, labels)`.
pub fn energy_eval<T: Scalar>(
    espec: &EnergySpec,
    mspec: &ModelSpec,
    params: &ParamVector<T>,
    inputs: &Tensor<T>,
    labels: &[usize],
    want_params: bool,
    want_inputs: bool,
) -> Result<EnergyEval<T>> {
    check_params(mspec, params)?;
    if let Some(&bad) = labels.iter().find(|&&y| y >= mspec.classes) {
        return Err(Error::contract(format!("label {bad} outside [0, {})", mspec.classes)));
    }
    let mut g = Graph::new();
    let pt = Tensor::from_vec(params.values().to_vec());
    let p = if want_params { g.leaf(pt)? } else { g.constant(pt)? };
    let x = if want_inputs {
        g.leaf(inputs.clone())?
    } else {
        g.constant(inputs.clone())?
    };
    let z = forward_graph(&mut g, mspec, p, x)?;
    let e = energy_graph(espec, &mut g, z, labels)?;
    let value = g.value(e).item()?;
    if want_params || want_inputs {
        g.backward(e)?;
    }
    Ok(EnergyEval {
        value,
        grad_params: if want_params {
            g.take_grad(p).map(Tensor::into_data)
        } else {
            None
        },
        grad_inputs: if want_inputs { g.take_grad(x) } else { None },
    })
}

/// `E(θ, D̃)`
pub fn energy<T: Scalar>(espec: &EnergySpec, mspec: &ModelSpec, params: &ParamVector<T>, dset: &SyntheticSet<T>) -> Result<T> {
    let labels = dset.label_indices()?;
    Ok(energy_eval(espec, mspec, params, dset.inputs(), &labels, false, false)?.value)
}

/// `∇_θ E(θ, D̃)`, flat in parameter order.
pub fn energy_grad_params<T: Scalar>(
    espec: &EnergySpec,
    mspec: &ModelSpec,
    params: &ParamVector<T>,
    dset: &SyntheticSet<T>,
) -> Result<Vec<T>> {
    let labels = dset.label_indices()?;
    let eval = energy_eval(espec, mspec, params, dset.inputs(), &labels, true, false)?;
    Ok(eval.grad_params.expect("requested"))
}

/// `∇_x̃ E(θ, D̃)`, shaped like the set's inputs. Labels stay fixed.
pub fn energy_grad_inputs<T: Scalar>(
    espec: &EnergySpec,
    mspec: &ModelSpec,
    params: &ParamVector<T>,
    dset: &SyntheticSet<T>,
) -> Result<Tensor<T>> {
    let labels = dset.label_indices()?;
    let eval = energy_eval(espec, mspec, params, dset.inputs(), &labels, false, true)?;
    Ok(eval.grad_inputs.expect("requested"))
}
