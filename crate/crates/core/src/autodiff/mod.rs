//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation in creation order, so node ids are
//! already a topological order. Leaves are created with [`Graph::leaf`]
//! (differentiable) or [`Graph::constant`]; [`Graph::backward`] walks the
//! tape once in reverse and stores gradients on the differentiable leaves.
//!
//! ```
//! use bpc::autodiff::Graph;
//! use bpc::Tensor;
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::scalar(3.0)).unwrap();
//! let y = g.mul(x, x).unwrap();
//! g.backward(y).unwrap();
//! assert_eq!(g.grad(x).unwrap().item().unwrap(), 6.0);
//! ```

mod kernels;

use kernels::{col2im, gemm, gemm_nt, gemm_tn, im2col, ConvGeom};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

/// Floor applied by [`Graph::clamp_log`] unless another is given.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so the output keeps the input's spatial extent.
    Same,
    Valid,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Shift(Var),
    MatMul(Var, Var),
    AddRow(Var, Var),
    AddChannel(Var, Var),
    SubCol(Var, Var),
    Conv2d { input: Var, weight: Var, geom: ConvGeom },
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    MaxPool2 { input: Var, argmax: Vec<usize> },
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    Gather { input: Var, index: Vec<usize> },
    Pow(Var, T),
    ClampLog(Var, T),
    Reshape(Var),
    Slice { input: Var, offset: usize },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Operation tape. Single-threaded; build one per evaluation.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoint buffer of `v`, created on first touch; `None` for constants.
fn slot<'a, T: Scalar>(nodes: &[Node<T>], adj: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let n = node.value.len();
    Some(adj[v.0].get_or_insert_with(|| vec![T::zero(); n]))
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Result<Var> {
        value.check_finite("input")?;
        Ok(self.push_raw(value, Op::Leaf, true))
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        value.check_finite("input")?;
        Ok(self.push_raw(value, Op::Leaf, false))
    }

    /// Copies `v`'s current value into a fresh constant, cutting it off
    /// from anything upstream.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf)
    }

    /// Leaves that will receive gradients, in creation order.
    pub fn trainable(&self) -> Vec<Var> {
        (0..self.nodes.len())
            .map(Var)
            .filter(|&v| self.is_leaf(v) && self.requires_grad(v))
            .collect()
    }

    /// Gradient stored by the last [`Graph::backward`], leaves only.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    fn push_raw(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        value.check_finite(name)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push(name, value, op, &[a, b])
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Result<Var> {
        let value = self.value(a).map(f);
        self.push(name, value, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `c · a`
    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        self.unary("scale", a, Op::Scale(a, c), |x| c * x)
    }

    /// `a + c` elementwise.
    pub fn shift(&mut self, a: Var, c: T) -> Result<Var> {
        self.unary("shift", a, Op::Shift(a), |x| x + c)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -T::one())
    }

    /// `(m×k) · (k×n) → (m×n)`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(self.data(a), self.data(b), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// Adds a vector of length `m` to every row of `(…, m)`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.is_empty() || sb.len() != 1 || sx[sx.len() - 1] != sb[0] {
            return Err(shape_err("add_row", sx, sb));
        }
        let m = sb[0];
        let b = self.data(bias);
        let data = self.data(x).iter().enumerate().map(|(i, &v)| v + b[i % m]).collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        self.push("add_row", value, Op::AddRow(x, bias), &[x, bias])
    }

    /// Adds a per-channel bias to `(n, c, h, w)`.
    pub fn add_channel(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 4 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(shape_err("add_channel", sx, sb));
        }
        let (c, hw) = (sx[1], sx[2] * sx[3]);
        let b = self.data(bias);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[(i / hw) % c])
            .collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        self.push("add_channel", value, Op::AddChannel(x, bias), &[x, bias])
    }

    /// Subtracts `col[i]` from every entry of row `i` of `(n, m)`.
    pub fn sub_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (sx, sc) = (self.shape(x), self.shape(col));
        if sx.len() != 2 || sc.len() != 1 || sx[0] != sc[0] {
            return Err(shape_err("sub_col", sx, sc));
        }
        let m = sx[1];
        let c = self.data(col);
        let data = self.data(x).iter().enumerate().map(|(i, &v)| v - c[i / m]).collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        self.push("sub_col", value, Op::SubCol(x, col), &[x, col])
    }

    /// Stride-1 convolution of `(n, c_in, h, w)` with square kernels
    /// `(c_out, c_in, k, k)`, lowered to im2col + matmul.
    pub fn conv2d(&mut self, input: Var, weight: Var, padding: Padding) -> Result<Var> {
        let (si, sw) = (self.shape(input), self.shape(weight));
        if si.len() != 4 || sw.len() != 4 || si[1] != sw[1] || sw[2] != sw[3] {
            return Err(shape_err("conv2d", si, sw));
        }
        let (n, c_in, h, w) = (si[0], si[1], si[2], si[3]);
        let (c_out, k) = (sw[0], sw[2]);
        let pad = match padding {
            Padding::Same => {
                if k % 2 == 0 {
                    return Err(Error::contract("same padding needs an odd kernel"));
                }
                k / 2
            }
            Padding::Valid => 0,
        };
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(shape_err("conv2d", si, sw));
        }
        let geom = ConvGeom {
            c_in,
            h,
            w,
            k,
            pad,
            h_out: h + 2 * pad - k + 1,
            w_out: w + 2 * pad - k + 1,
        };
        let (patch, npos) = (geom.patch(), geom.positions());
        let mut cols = vec![T::zero(); patch * npos];
        let mut out = vec![T::zero(); n * c_out * npos];
        let (xd, wd) = (self.data(input), self.data(weight));
        for b in 0..n {
            im2col(&xd[b * c_in * h * w..(b + 1) * c_in * h * w], &geom, &mut cols);
            gemm(wd, &cols, &mut out[b * c_out * npos..(b + 1) * c_out * npos], c_out, patch, npos);
        }
        let value = Tensor::new(vec![n, c_out, geom.h_out, geom.w_out], out)?;
        self.push("conv2d", value, Op::Conv2d { input, weight, geom }, &[input, weight])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, Op::Exp(a), |x| x.exp())
    }

    /// 2×2 max pooling with stride 2 over `(n, c, h, w)`; odd trailing
    /// rows/columns are dropped. Ties go to the first element in
    /// row-major window order.
    pub fn max_pool2(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(shape_err("max_pool2", &s, &[2, 2]));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ho, wo) = (h / 2, w / 2);
        let x = self.data(a);
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![n, c, ho, wo], out)?;
        self.push("max_pool2", value, Op::MaxPool2 { input: a, argmax }, &[a])
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        let m = *s.last().ok_or_else(|| Error::contract("log_softmax of a scalar"))?;
        let x = self.data(a);
        let mut out = Vec::with_capacity(x.len());
        for row in x.chunks(m) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            out.extend(row.iter().map(|&v| v - lse));
        }
        let value = Tensor::new(s.to_vec(), out)?;
        self.push("log_softmax", value, Op::LogSoftmax(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.data(a).iter().copied().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.data(a);
        let total: T = x.iter().copied().sum();
        let value = Tensor::scalar(total / T::of_usize(x.len()));
        self.push("mean", value, Op::Mean(a), &[a])
    }

    /// Picks `x[i, index[i]]` from `(n, m)`, giving `(n,)`.
    pub fn gather(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 || s[0] != index.len() {
            return Err(shape_err("gather", s, &[index.len()]));
        }
        let m = s[1];
        if let Some(&bad) = index.iter().find(|&&j| j >= m) {
            return Err(Error::contract(format!("gather index {bad} out of range {m}")));
        }
        let x = self.data(a);
        let out = index.iter().enumerate().map(|(i, &j)| x[i * m + j]).collect();
        let value = Tensor::from_vec(out);
        self.push("gather", value, Op::Gather { input: a, index: index.to_vec() }, &[a])
    }

    /// Elementwise `x^p`.
    pub fn pow(&mut self, a: Var, p: T) -> Result<Var> {
        self.unary("pow", a, Op::Pow(a, p), |x| x.powf(p))
    }

    /// `ln(max(x, floor))`
    pub fn clamp_log(&mut self, a: Var, floor: T) -> Result<Var> {
        self.unary("clamp_log", a, Op::ClampLog(a, floor), |x| x.max(floor).ln())
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape.to_vec())?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    /// Contiguous run `[offset, offset + numel(shape))` of `a`'s flat data,
    /// viewed with `shape`.
    pub fn slice(&mut self, a: Var, offset: usize, shape: &[usize]) -> Result<Var> {
        let len = numel(shape);
        let src = self.data(a);
        if offset + len > src.len() {
            return Err(shape_err("slice", self.shape(a), shape));
        }
        let value = Tensor::new(shape.to_vec(), src[offset..offset + len].to_vec())?;
        self.push("slice", value, Op::Slice { input: a, offset }, &[a])
    }

    /// Reverse sweep from a one-element `loss`. Every differentiable leaf
    /// gets a gradient (zeros if unreachable); interior adjoints are dropped.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward from non-scalar of shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            adj[loss.0] = Some(vec![T::one()]);
        }
        let mut leaf_grads = Vec::new();
        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                leaf_grads.push((id, g));
                continue;
            }
            self.propagate(id, &g, &mut adj);
        }
        for (id, g) in leaf_grads {
            let grad = Tensor::new(self.nodes[id].value.shape().to_vec(), g)?;
            grad.check_finite("backward")?;
            self.nodes[id].grad = Some(grad);
        }
        for node in &mut self.nodes {
            if node.requires_grad && matches!(node.op, Op::Leaf) && node.grad.is_none() {
                node.grad = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let y = node.value.data();
        macro_rules! with_slot {
            ($v:expr, |$s:ident| $body:block) => {
                if let Some($s) = slot(&self.nodes, adj, $v) $body
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                with_slot!(*a, |s| { s.iter_mut().zip(g).for_each(|(s, &g)| *s += g) });
                with_slot!(*b, |s| { s.iter_mut().zip(g).for_each(|(s, &g)| *s += g) });
            }
            Op::Sub(a, b) => {
                with_slot!(*a, |s| { s.iter_mut().zip(g).for_each(|(s, &g)| *s += g) });
                with_slot!(*b, |s| { s.iter_mut().zip(g).for_each(|(s, &g)| *s -= g) });
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (self.data(*a), self.data(*b));
                with_slot!(*a, |s| {
                    for i in 0..g.len() {
                        s[i] += g[i] * xb[i];
                    }
                });
                with_slot!(*b, |s| {
                    for i in 0..g.len() {
                        s[i] += g[i] * xa[i];
                    }
                });
            }
            Op::Scale(a, c) => {
                with_slot!(*a, |s| { s.iter_mut().zip(g).for_each(|(s, &g)| *s += *c * g) });
            }
            Op::Shift(a) | Op::Reshape(a) => {
                with_slot!(*a, |s| { s.iter_mut().zip(g).for_each(|(s, &g)| *s += g) });
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (xa, xb) = (self.data(*a), self.data(*b));
                with_slot!(*a, |s| { gemm_nt(g, xb, s, m, n, k) });
                with_slot!(*b, |s| { gemm_tn(xa, g, s, k, m, n) });
            }
            Op::AddRow(x, bias) => {
                let m = self.shape(*bias)[0];
                with_slot!(*x, |s| { s.iter_mut().zip(g).for_each(|(s, &g)| *s += g) });
                with_slot!(*bias, |s| {
                    for (i, &gv) in g.iter().enumerate() {
                        s[i % m] += gv;
                    }
                });
            }
            Op::AddChannel(x, bias) => {
                let sx = self.shape(*x);
                let (c, hw) = (sx[1], sx[2] * sx[3]);
                with_slot!(*x, |s| { s.iter_mut().zip(g).for_each(|(s, &g)| *s += g) });
                with_slot!(*bias, |s| {
                    for (i, &gv) in g.iter().enumerate() {
                        s[(i / hw) % c] += gv;
                    }
                });
            }
            Op::SubCol(x, col) => {
                let m = self.shape(*x)[1];
                with_slot!(*x, |s| { s.iter_mut().zip(g).for_each(|(s, &g)| *s += g) });
                with_slot!(*col, |s| {
                    for (i, row) in g.chunks(m).enumerate() {
                        s[i] -= row.iter().copied().sum::<T>();
                    }
                });
            }
            Op::Conv2d { input, weight, geom } => {
                let n = self.shape(*input)[0];
                let c_out = self.shape(*weight)[0];
                let (patch, npos) = (geom.patch(), geom.positions());
                let img = geom.c_in * geom.h * geom.w;
                let (xd, wd) = (self.data(*input), self.data(*weight));
                let mut cols = vec![T::zero(); patch * npos];
                with_slot!(*weight, |s| {
                    for b in 0..n {
                        im2col(&xd[b * img..(b + 1) * img], geom, &mut cols);
                        gemm_nt(&g[b * c_out * npos..(b + 1) * c_out * npos], &cols, s, c_out, npos, patch);
                    }
                });
                with_slot!(*input, |s| {
                    for b in 0..n {
                        cols.iter_mut().for_each(|v| *v = T::zero());
                        gemm_tn(wd, &g[b * c_out * npos..(b + 1) * c_out * npos], &mut cols, patch, c_out, npos);
                        col2im(&cols, geom, &mut s[b * img..(b + 1) * img]);
                    }
                });
            }
            Op::Relu(a) => {
                let x = self.data(*a);
                with_slot!(*a, |s| {
                    for i in 0..g.len() {
                        if x[i] > T::zero() {
                            s[i] += g[i];
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                with_slot!(*a, |s| {
                    for i in 0..g.len() {
                        s[i] += g[i] * (T::one() - y[i] * y[i]);
                    }
                });
            }
            Op::Exp(a) => {
                with_slot!(*a, |s| {
                    for i in 0..g.len() {
                        s[i] += g[i] * y[i];
                    }
                });
            }
            Op::MaxPool2 { input, argmax } => {
                with_slot!(*input, |s| {
                    for (&src, &gv) in argmax.iter().zip(g) {
                        s[src] += gv;
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let m = *self.shape(*a).last().expect("log_softmax input has an axis");
                with_slot!(*a, |s| {
                    for ((srow, grow), yrow) in s.chunks_mut(m).zip(g.chunks(m)).zip(y.chunks(m)) {
                        let total: T = grow.iter().copied().sum();
                        for j in 0..m {
                            srow[j] += grow[j] - yrow[j].exp() * total;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                with_slot!(*a, |s| { s.iter_mut().for_each(|s| *s += g[0]) });
            }
            Op::Mean(a) => {
                let share = g[0] / T::of_usize(self.value(*a).len());
                with_slot!(*a, |s| { s.iter_mut().for_each(|s| *s += share) });
            }
            Op::Gather { input, index } => {
                let m = self.shape(*input)[1];
                with_slot!(*input, |s| {
                    for (i, &j) in index.iter().enumerate() {
                        s[i * m + j] += g[i];
                    }
                });
            }
            Op::Pow(a, p) => {
                if *p != T::zero() {
                    let x = self.data(*a);
                    let pm1 = *p - T::one();
                    with_slot!(*a, |s| {
                        for i in 0..g.len() {
                            s[i] += g[i] * *p * x[i].powf(pm1);
                        }
                    });
                }
            }
            Op::ClampLog(a, floor) => {
                let x = self.data(*a);
                with_slot!(*a, |s| {
                    for i in 0..g.len() {
                        if x[i] > *floor {
                            s[i] += g[i] / x[i];
                        }
                    }
                });
            }
            Op::Slice { input, offset } => {
                with_slot!(*input, |s| {
                    s[*offset..*offset + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(s, &g)| *s += g)
                });
            }
        }
    }
}
