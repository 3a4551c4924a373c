//! Reverse-mode automatic differentiation over a per-pass operation record.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation appends a
//! node holding its output value and whatever it needs for its adjoint, so the
//! node order is already a topological order. [`Graph::backward`] walks it once
//! in reverse, after which the graph is spent: gradients stay readable but a
//! second backward pass is refused.
//!
//! Layer operations (convolution, pooling, batch normalization, loss) add their
//! graph methods from the `nn` modules; the elementwise and matrix operations
//! live here.

use crate::error::{Error, Result};
use crate::nn;
use crate::tensor::{as_matrix, gemm, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    Sigmoid(Var),
    Relu(Var),
    AbsDiff(Var, Var),
    Reshape(Var),
    SliceRows { x: Var, start: usize },
    ConcatRows(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Conv3x3 { x: Var, w: Var, b: Option<Var> },
    MaxPool2x2 { x: Var, argmax: Vec<usize> },
    BatchNorm(nn::batchnorm::BatchNormSaved),
    Bce { pred: Var, labels: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
    consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every recorded node so the graph can host a new pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.leaf_grads.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Option<Var>]) -> Result<Var> {
        if self.consumed {
            return Err(Error::State("graph already ran backward; reset it first".into()));
        }
        let requires_grad = inputs.iter().flatten().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), &[Some(a), Some(b)])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        self.push(out, Op::Add(a, b), &[Some(a), Some(b)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), &[Some(a), Some(b)])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.map(a, |x| x * factor);
        self.push(out, Op::Scale(a, factor), &[Some(a)])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[Some(a)])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[Some(a)])
    }

    /// Logistic function, kept strictly inside (0, 1).
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, sigmoid);
        self.push(out, Op::Sigmoid(a), &[Some(a)])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| x.max(0.0));
        self.push(out, Op::Relu(a), &[Some(a)])
    }

    /// Elementwise `|a - b|`; the subgradient at zero is zero.
    pub fn abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "abs_diff", |x, y| (x - y).abs())?;
        self.push(out, Op::AbsDiff(a, b), &[Some(a), Some(b)])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape.to_vec())?;
        self.push(out, Op::Reshape(a), &[Some(a)])
    }

    /// Flattens everything after the leading (batch) axis.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a);
        let n = shape[0];
        let rest = shape[1..].iter().product::<usize>().max(1);
        self.reshape(a, &[n, rest])
    }

    /// Rows `start..end` of the leading axis.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let rows = t.shape()[0];
        if start >= end || end > rows {
            return Err(Error::dim(format!("row slice {start}..{end} of {:?}", t.shape())));
        }
        let stride = t.numel() / rows;
        let data = t.data()[start * stride..end * stride].to_vec();
        let mut shape = t.shape().to_vec();
        shape[0] = end - start;
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::SliceRows { x: a, start }, &[Some(a)])
    }

    /// Joins two batches along the leading axis.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() < 2 || ta.shape()[1..] != tb.shape()[1..] {
            return Err(Error::dim(format!("cannot concatenate {:?} with {:?}", ta.shape(), tb.shape())));
        }
        let mut shape = ta.shape().to_vec();
        shape[0] += tb.shape()[0];
        let mut data = Vec::with_capacity(ta.numel() + tb.numel());
        data.extend_from_slice(ta.data());
        data.extend_from_slice(tb.data());
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::ConcatRows(a, b), &[Some(a), Some(b)])
    }

    /// `x · wᵀ + b` for `x: N×in`, `w: out×in`, `b: out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, inp) = as_matrix(self.value(x))?;
        let (out, win) = as_matrix(self.value(w))?;
        if inp != win {
            return Err(Error::dim(format!(
                "linear: input {:?} against weight {:?}",
                self.shape(x),
                self.shape(w)
            )));
        }
        let mut y = vec![0.0; n * out];
        if let Some(b) = b {
            let bias = self.value(b);
            if bias.numel() != out {
                return Err(Error::dim(format!(
                    "linear: bias {:?} for {out} outputs",
                    bias.shape()
                )));
            }
            for row in y.chunks_mut(out) {
                row.copy_from_slice(bias.data());
            }
        }
        gemm(n, inp, out, self.value(x).data(), false, self.value(w).data(), true, &mut y, 1.0);
        let y = Tensor::new([n, out], y)?;
        self.push(y, Op::Linear { x, w, b }, &[Some(x), Some(w), b])
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
            .expect("map preserves shape")
    }

    fn zip(&self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(format!(
                "{name}: shapes {:?} and {:?} differ",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    /// Seeds `d loss = 1` and replays every adjoint in reverse order.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::State("backward already ran on this graph".into()));
        }
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);
        self.leaf_grads.clear();
        self.leaf_grads.resize_with(self.nodes.len(), || None);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                self.leaf_grads[i] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
        }
        self.consumed = true;
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = as_matrix(&self.nodes[a.0].value)?;
                let n = node.value.shape()[1];
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, false, val(*b), true, &mut da, 0.0);
                    accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, val(*a), true, g, false, &mut db, 0.0);
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        accumulate(grads, *v, g.to_vec());
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.iter().zip(val(*b)).map(|(g, y)| g * y).collect());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.iter().zip(val(*a)).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, f) => accumulate(grads, *a, g.iter().map(|g| g * f).collect()),
            Op::Sum(a) => accumulate(grads, *a, vec![g[0]; val(*a).len()]),
            Op::Mean(a) => {
                let n = val(*a).len();
                accumulate(grads, *a, vec![g[0] / n as f64; n]);
            }
            Op::Sigmoid(a) => {
                let s = node.value.data();
                accumulate(grads, *a, g.iter().zip(s).map(|(g, s)| g * s * (1.0 - s)).collect());
            }
            Op::Relu(a) => {
                let x = val(*a);
                accumulate(
                    grads,
                    *a,
                    g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect(),
                );
            }
            Op::AbsDiff(a, b) => {
                let sign: Vec<f64> = val(*a)
                    .iter()
                    .zip(val(*b))
                    .zip(g)
                    .map(|((x, y), g)| {
                        let d = x - y;
                        if d > 0.0 {
                            *g
                        } else if d < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.wants(*b) {
                    accumulate(grads, *b, sign.iter().map(|s| -s).collect());
                }
                if self.wants(*a) {
                    accumulate(grads, *a, sign);
                }
            }
            Op::Reshape(a) => accumulate(grads, *a, g.to_vec()),
            Op::SliceRows { x, start } => {
                let xt = &self.nodes[x.0].value;
                let stride = xt.numel() / xt.shape()[0];
                let mut dx = vec![0.0; xt.numel()];
                dx[start * stride..start * stride + g.len()].copy_from_slice(g);
                accumulate(grads, *x, dx);
            }
            Op::ConcatRows(a, b) => {
                let split = val(*a).len();
                if self.wants(*a) {
                    accumulate(grads, *a, g[..split].to_vec());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g[split..].to_vec());
                }
            }
            Op::Linear { x, w, b } => {
                let (n, inp) = as_matrix(&self.nodes[x.0].value)?;
                let out = node.value.shape()[1];
                if self.wants(*x) {
                    let mut dx = vec![0.0; n * inp];
                    gemm(n, out, inp, g, false, val(*w), false, &mut dx, 0.0);
                    accumulate(grads, *x, dx);
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; out * inp];
                    gemm(out, n, inp, g, true, val(*x), false, &mut dw, 0.0);
                    accumulate(grads, *w, dw);
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let mut db = vec![0.0; out];
                        for row in g.chunks(out) {
                            for (d, r) in db.iter_mut().zip(row) {
                                *d += r;
                            }
                        }
                        accumulate(grads, *b, db);
                    }
                }
            }
            Op::Conv3x3 { x, w, b } => {
                let grads_out = nn::conv::conv3x3_backward(
                    &self.nodes[x.0].value,
                    &self.nodes[w.0].value,
                    g,
                    self.wants(*x),
                    self.wants(*w),
                    b.is_some_and(|b| self.wants(b)),
                );
                if let Some(dx) = grads_out.dx {
                    accumulate(grads, *x, dx);
                }
                if let Some(dw) = grads_out.dw {
                    accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, grads_out.db) {
                    accumulate(grads, *b, db);
                }
            }
            Op::MaxPool2x2 { x, argmax } => {
                let mut dx = vec![0.0; val(*x).len()];
                for (&src, g) in argmax.iter().zip(g) {
                    dx[src] += g;
                }
                accumulate(grads, *x, dx);
            }
            Op::BatchNorm(saved) => {
                let x = &self.nodes[saved.x.0].value;
                let gamma = val(saved.gamma);
                let (dx, dgamma, dbeta) = saved.backward(x.shape(), gamma, g);
                if self.wants(saved.x) {
                    accumulate(grads, saved.x, dx);
                }
                if self.wants(saved.gamma) {
                    accumulate(grads, saved.gamma, dgamma);
                }
                if self.wants(saved.beta) {
                    accumulate(grads, saved.beta, dbeta);
                }
            }
            Op::Bce { pred, labels } => {
                let dp = nn::loss::bce_backward(val(*pred), labels, g[0]);
                accumulate(grads, *pred, dp);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

/// Logistic function clamped to the open unit interval.
pub fn sigmoid(x: f64) -> f64 {
    const HI: f64 = 1.0 - f64::EPSILON / 2.0;
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, HI)
}

/// Worst relative disagreement between the analytic gradient of `f` at `x`
/// and a central finite difference with step `eps`.
///
/// `f` must build a scalar from the leaf it is handed. The per-element error
/// is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::contract(format!("finite-difference step must be positive, got {eps}")));
    }
    let eval = |point: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.leaf(point, false);
        let out = f(&mut g, v)?;
        let value = g.value(out).item()?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("function value {value} is not finite")));
        }
        Ok(value)
    };

    let mut g = Graph::new();
    let v = g.leaf(x.clone(), true);
    let out = f(&mut g, v)?;
    let value = g.value(out).item()?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("function value {value} is not finite")));
    }
    g.backward(out)?;
    let analytic = match g.grad(v) {
        Some(t) => t.data().to_vec(),
        None => vec![0.0; x.numel()],
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
