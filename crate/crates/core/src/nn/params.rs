use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of a learnable tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Index of a non-learnable state tensor (batchnorm running statistics).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

/// The single owner of every learnable tensor and running buffer of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<(String, Tensor)>,
    buffers: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_param(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push((name.into(), value));
        ParamId(self.params.len() - 1)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> BufferId {
        self.buffers.push((name.into(), value));
        BufferId(self.buffers.len() - 1)
    }

    pub fn param(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].1
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].1
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor {
        &self.buffers[id.0].1
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor {
        &mut self.buffers[id.0].1
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.buffers.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|(n, _)| n == name).map(ParamId)
    }

    /// Parameters then buffers, each tagged with whether it is a buffer.
    pub(crate) fn entries_mut(&mut self) -> impl Iterator<Item = (bool, &str, &mut Tensor)> {
        let p = self.params.iter_mut().map(|(n, t)| (false, n.as_str(), t));
        let b = self.buffers.iter_mut().map(|(n, t)| (true, n.as_str(), t));
        p.chain(b)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param_tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().map(|(_, t)| t)
    }

    /// Total number of learnable scalars.
    pub fn num_weights(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Registers every parameter as a leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph, requires_grad: bool) -> Bound {
        Bound(self.params.iter().map(|(_, t)| graph.leaf(t.clone(), requires_grad)).collect())
    }

    /// Parameter gradients after `graph.backward`, zero where a parameter was unused.
    pub fn grads(&self, graph: &Graph, bound: &Bound) -> Vec<Tensor> {
        self.params
            .iter()
            .zip(&bound.0)
            .map(|((_, t), v)| {
                graph.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
            })
            .collect()
    }

    /// Overwrites values from another store with the identical layout.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::contract("parameter stores have different layouts"));
        }
        self.clone_from(other);
        Ok(())
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        let layout = |v: &[(String, Tensor)]| -> Vec<(String, Vec<usize>)> {
            v.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect()
        };
        layout(&self.params) == layout(&other.params) && layout(&self.buffers) == layout(&other.buffers)
    }

    pub(crate) fn apply(&mut self, updates: &[RunningUpdate]) {
        for u in updates {
            let m = u.momentum;
            for (r, b) in self.buffer_mut(u.mean).data_mut().iter_mut().zip(&u.batch_mean) {
                *r = (1.0 - m) * *r + m * b;
            }
            for (r, b) in self.buffer_mut(u.var).data_mut().iter_mut().zip(&u.batch_var) {
                *r = (1.0 - m) * *r + m * b;
            }
        }
    }
}

/// Graph leaves for one forward pass, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Substitutes another graph node for one parameter, e.g. to differentiate
    /// with respect to that parameter alone.
    pub fn replaced(mut self, id: ParamId, var: Var) -> Bound {
        self.0[id.0] = var;
        self
    }
}

/// Pending running-statistics update produced by a training-mode batchnorm.
#[derive(Clone, Debug)]
pub struct RunningUpdate {
    pub mean: BufferId,
    pub var: BufferId,
    pub batch_mean: Vec<f64>,
    /// Unbiased batch variance.
    pub batch_var: Vec<f64>,
    pub momentum: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything a layer needs during one forward pass.
pub struct Pass<'a> {
    pub graph: &'a mut Graph,
    pub bound: &'a Bound,
    pub store: &'a ParamStore,
    pub mode: Mode,
    pub updates: Vec<RunningUpdate>,
}

impl<'a> Pass<'a> {
    pub fn new(graph: &'a mut Graph, bound: &'a Bound, store: &'a ParamStore, mode: Mode) -> Self {
        Pass { graph, bound, store, mode, updates: Vec::new() }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.bound.var(id)
    }
}

/// Weight initialisation schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// `U(-b, b)` with `b = sqrt(6 / fan_in)`, for layers feeding a ReLU.
    KaimingUniform,
    /// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`, for layers feeding a sigmoid.
    XavierUniform,
}

impl Init {
    pub fn sample(self, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
        let bound = match self {
            Init::KaimingUniform => (6.0 / fan_in as f64).sqrt(),
            Init::XavierUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        };
        Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-bound..bound))
    }
}
