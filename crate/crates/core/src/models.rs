//! Classifier architectures with a flat parameter layout.
//!
//! Every architecture is a stateless function of one flat parameter
//! vector, so a network's parameters can be treated as a single point
//! for sampling and snapshotting.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{Graph, Padding, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_from;
use crate::tensor::{numel, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Mlp,
    MlpDeep,
    ConvnetSmall,
    ConvnetWide,
}

impl ArchKind {
    pub const ALL: [ArchKind; 4] = [ArchKind::Mlp, ArchKind::MlpDeep, ArchKind::ConvnetSmall, ArchKind::ConvnetWide];

    pub fn is_conv(self) -> bool {
        matches!(self, ArchKind::ConvnetSmall | ArchKind::ConvnetWide)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArchKind::Mlp => "mlp",
            ArchKind::MlpDeep => "mlp-deep",
            ArchKind::ConvnetSmall => "convnet-small",
            ArchKind::ConvnetWide => "convnet-wide",
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::contract(format!("unknown architecture {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::contract(format!("unknown activation {s:?}"))),
        }
    }
}

/// Architecture description.
///
/// `widths` are hidden layer sizes for the MLP kinds and conv block
/// channel counts for the convnet kinds. Convnet blocks are
/// `conv 3×3 (same) → activation → max-pool 2×2`, followed by one linear
/// layer; MLPs are dense layers with the activation between them.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub kind: ArchKind,
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub widths: Vec<usize>,
    pub activation: Activation,
}

/// One named parameter tensor inside the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Fan-in for weights, `None` for biases.
    pub fan_in: Option<usize>,
}

pub const CONV_KERNEL: usize = 3;

impl ModelSpec {
    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize) -> Self {
        ModelSpec {
            kind: ArchKind::Mlp,
            input_shape: vec![input_dim],
            classes,
            widths: hidden.to_vec(),
            activation: Activation::Relu,
        }
    }

    /// Three hidden layers of `width`.
    pub fn mlp_deep(input_dim: usize, width: usize, classes: usize) -> Self {
        ModelSpec {
            kind: ArchKind::MlpDeep,
            widths: vec![width; 3],
            ..Self::mlp(input_dim, &[], classes)
        }
    }

    /// Two 16-channel conv blocks.
    pub fn convnet_small(input_shape: &[usize], classes: usize) -> Self {
        ModelSpec {
            kind: ArchKind::ConvnetSmall,
            input_shape: input_shape.to_vec(),
            classes,
            widths: vec![16, 16],
            activation: Activation::Relu,
        }
    }

    /// Two 32-channel conv blocks.
    pub fn convnet_wide(input_shape: &[usize], classes: usize) -> Self {
        ModelSpec {
            kind: ArchKind::ConvnetWide,
            widths: vec![32, 32],
            ..Self::convnet_small(input_shape, classes)
        }
    }

    /// The default spec of `kind` for the given input and class count.
    pub fn default_for(kind: ArchKind, input_shape: &[usize], classes: usize) -> Self {
        let dim = numel(input_shape);
        let mut spec = match kind {
            ArchKind::Mlp => Self::mlp(dim, &[64], classes),
            ArchKind::MlpDeep => Self::mlp_deep(dim, 64, classes),
            ArchKind::ConvnetSmall => Self::convnet_small(input_shape, classes),
            ArchKind::ConvnetWide => Self::convnet_wide(input_shape, classes),
        };
        spec.input_shape = input_shape.to_vec();
        spec
    }

    pub fn input_dim(&self) -> usize {
        numel(&self.input_shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::contract("a classifier needs at least 2 classes"));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::contract(format!("bad input shape {:?}", self.input_shape)));
        }
        if self.widths.contains(&0) {
            return Err(Error::contract("zero layer width"));
        }
        if self.kind.is_conv() {
            if self.input_shape.len() != 3 {
                return Err(Error::contract(format!(
                    "{} needs a (channels, height, width) input, got {:?}",
                    self.kind, self.input_shape
                )));
            }
            let (mut h, mut w) = (self.input_shape[1], self.input_shape[2]);
            for _ in &self.widths {
                if h < 2 || w < 2 {
                    return Err(Error::contract(format!(
                        "input {:?} too small for {} pooling stages",
                        self.input_shape,
                        self.widths.len()
                    )));
                }
                h /= 2;
                w /= 2;
            }
        }
        Ok(())
    }

    /// Spatial extent left after all pooling stages.
    fn conv_output_hw(&self) -> (usize, usize) {
        let (mut h, mut w) = (self.input_shape[1], self.input_shape[2]);
        for _ in &self.widths {
            h /= 2;
            w /= 2;
        }
        (h, w)
    }

    /// Parameter tensors in flat order: per layer, weight then bias.
    /// Dense weights are `(in, out)`, conv kernels `(out, in, 3, 3)`.
    pub fn layout(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>, fan_in: Option<usize>| {
            let n = numel(&shape);
            slots.push(ParamSlot {
                name,
                shape,
                offset,
                fan_in,
            });
            offset += n;
        };
        if self.kind.is_conv() {
            let mut c_in = self.input_shape[0];
            for (i, &c_out) in self.widths.iter().enumerate() {
                let fan = c_in * CONV_KERNEL * CONV_KERNEL;
                push(format!("conv{i}.weight"), vec![c_out, c_in, CONV_KERNEL, CONV_KERNEL], Some(fan));
                push(format!("conv{i}.bias"), vec![c_out], None);
                c_in = c_out;
            }
            let (h, w) = self.conv_output_hw();
            let flat = c_in * h * w;
            push("head.weight".into(), vec![flat, self.classes], Some(flat));
            push("head.bias".into(), vec![self.classes], None);
        } else {
            let mut d_in = self.input_dim();
            for (i, &d_out) in self.widths.iter().chain(std::iter::once(&self.classes)).enumerate() {
                push(format!("dense{i}.weight"), vec![d_in, d_out], Some(d_in));
                push(format!("dense{i}.bias"), vec![d_out], None);
                d_in = d_out;
            }
        }
        slots
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(|s| numel(&s.shape)).sum()
    }
}

/// Flattened classifier parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<T> {
    values: Vec<T>,
    spec: ModelSpec,
}

impl<T: Scalar> ParamVector<T> {
    pub fn new(spec: &ModelSpec, values: Vec<T>) -> Result<Self> {
        let want = spec.parameter_count();
        if values.len() != want {
            return Err(Error::Shape {
                op: "param_vector",
                lhs: vec![want],
                rhs: vec![values.len()],
            });
        }
        Ok(ParamVector {
            values,
            spec: spec.clone(),
        })
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        ParamVector {
            values: vec![T::zero(); spec.parameter_count()],
            spec: spec.clone(),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Per-layer tensors in layout order.
    pub fn unflatten(&self) -> Vec<Tensor<T>> {
        self.spec
            .layout()
            .into_iter()
            .map(|slot| {
                let n = numel(&slot.shape);
                Tensor::new(slot.shape, self.values[slot.offset..slot.offset + n].to_vec())
                    .expect("layout slots match parameter_count")
            })
            .collect()
    }

    pub fn flatten(spec: &ModelSpec, layers: &[Tensor<T>]) -> Result<Self> {
        let layout = spec.layout();
        if layout.len() != layers.len() {
            return Err(Error::contract(format!(
                "expected {} layer tensors, got {}",
                layout.len(),
                layers.len()
            )));
        }
        let mut values = Vec::with_capacity(spec.parameter_count());
        for (slot, t) in layout.iter().zip(layers) {
            if t.shape() != slot.shape.as_slice() {
                return Err(Error::Shape {
                    op: "flatten",
                    lhs: slot.shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
            values.extend_from_slice(t.data());
        }
        Self::new(spec, values)
    }

    /// Rounds every value to `f32` precision.
    pub fn quantized(&self) -> Self {
        ParamVector {
            values: self.values.iter().map(|v| v.quantize()).collect(),
            spec: self.spec.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Kaiming-uniform fan-in weights (`U(−√(6/fan_in), √(6/fan_in))`),
/// zero biases.
pub fn init_params<T: Scalar>(spec: &ModelSpec, seed: u64) -> ParamVector<T> {
    let mut rng = rng_from(seed);
    let mut values = vec![T::zero(); spec.parameter_count()];
    for slot in spec.layout() {
        if let Some(fan_in) = slot.fan_in {
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in &mut values[slot.offset..slot.offset + numel(&slot.shape)] {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
    }
    ParamVector {
        values,
        spec: spec.clone(),
    }
}

fn activate<T: Scalar>(g: &mut Graph<T>, spec: &ModelSpec, x: Var) -> Result<Var> {
    match spec.activation {
        Activation::Relu => g.relu(x),
        Activation::Tanh => g.tanh(x),
    }
}

/// Records the network on `g` and returns the `(batch, classes)` logits.
///
/// `params` must hold the flat parameter vector and `inputs` a batch of
/// shape `(batch, input_shape…)`. Either may be a constant or a leaf.
pub fn forward_graph<T: Scalar>(g: &mut Graph<T>, spec: &ModelSpec, params: Var, inputs: Var) -> Result<Var> {
    let pshape = g.shape(params).to_vec();
    if pshape != [spec.parameter_count()] {
        return Err(Error::Shape {
            op: "forward(params)",
            lhs: vec![spec.parameter_count()],
            rhs: pshape,
        });
    }
    let ishape = g.shape(inputs).to_vec();
    if ishape.len() != spec.input_shape.len() + 1 || ishape[1..] != spec.input_shape[..] {
        let mut want = vec![0];
        want.extend_from_slice(&spec.input_shape);
        return Err(Error::Shape {
            op: "forward(inputs)",
            lhs: want,
            rhs: ishape,
        });
    }
    let batch = ishape[0];
    let layout = spec.layout();
    let mut slots = layout.iter();
    let mut next = |g: &mut Graph<T>| -> Result<Var> {
        let slot = slots.next().expect("layout covers every layer");
        g.slice(params, slot.offset, &slot.shape)
    };
    if spec.kind.is_conv() {
        let mut h = inputs;
        for _ in &spec.widths {
            let w = next(g)?;
            let b = next(g)?;
            h = g.conv2d(h, w, Padding::Same)?;
            h = g.add_channel(h, b)?;
            h = activate(g, spec, h)?;
            h = g.max_pool2(h)?;
        }
        let flat = g.value(h).len() / batch;
        let h = g.reshape(h, &[batch, flat])?;
        let w = next(g)?;
        let b = next(g)?;
        let z = g.matmul(h, w)?;
        g.add_row(z, b)
    } else {
        let mut h = g.reshape(inputs, &[batch, spec.input_dim()])?;
        let layers = spec.widths.len() + 1;
        for i in 0..layers {
            let w = next(g)?;
            let b = next(g)?;
            h = g.matmul(h, w)?;
            h = g.add_row(h, b)?;
            if i + 1 < layers {
                h = activate(g, spec, h)?;
            }
        }
        Ok(h)
    }
}

/// Logits for `inputs` with no gradient tracking.
pub fn forward<T: Scalar>(spec: &ModelSpec, params: &ParamVector<T>, inputs: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let p = g.constant(Tensor::from_vec(params.values().to_vec()))?;
    let x = g.constant(inputs.clone())?;
    let z = forward_graph(&mut g, spec, p, x)?;
    Ok(g.value(z).clone())
}

/// Index of the largest logit per row; ties resolve to the lowest index.
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let c = *logits.shape().last().expect("logits are (batch, classes)");
    logits
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose arg-max logit equals the label.
pub fn accuracy<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    inputs: &Tensor<T>,
    labels: &[usize],
) -> Result<f64> {
    const CHUNK: usize = 1024;
    let n = labels.len();
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let count = CHUNK.min(n - start);
        let logits = forward(spec, params, &inputs.rows(start, count)?)?;
        correct += argmax_rows(&logits)
            .iter()
            .zip(&labels[start..start + count])
            .filter(|(p, y)| p == y)
            .count();
        start += count;
    }
    Ok(correct as f64 / n as f64)
}
