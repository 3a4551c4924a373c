//! Parameterised layers. Each owns ids into a [`ParamStore`] rather than tensors.

use rand::Rng;

use crate::autograd::Var;
use crate::error::Result;
use crate::nn::params::{BufferId, Init, Mode, ParamId, ParamStore, Pass, RunningUpdate};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, pass: &mut Pass<'_>, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => pass.graph.relu(x),
            Activation::Sigmoid => pass.graph.sigmoid(x),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv3x3 {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv3x3 {
    /// A bias is pointless ahead of batch normalisation, which subtracts
    /// any per-channel constant; pass `bias: false` there.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * 9;
        let w = Init::KaimingUniform.sample(&[out_channels, in_channels, 3, 3], fan_in, out_channels * 9, rng);
        Conv3x3 {
            weight: store.add_param(format!("{name}.weight"), w),
            bias: bias.then(|| store.add_param(format!("{name}.bias"), Tensor::zeros([out_channels]))),
            in_channels,
            out_channels,
        }
    }

    pub fn forward(&self, pass: &mut Pass<'_>, x: Var) -> Result<Var> {
        let w = pass.var(self.weight);
        let b = self.bias.map(|b| pass.var(b));
        pass.graph.conv3x3(x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        out_features: usize,
        bias: bool,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let w = init.sample(&[out_features, in_features], in_features, out_features, rng);
        Linear {
            weight: store.add_param(format!("{name}.weight"), w),
            bias: bias.then(|| store.add_param(format!("{name}.bias"), Tensor::zeros([out_features]))),
            in_features,
            out_features,
        }
    }

    pub fn forward(&self, pass: &mut Pass<'_>, x: Var) -> Result<Var> {
        let w = pass.var(self.weight);
        let b = self.bias.map(|b| pass.var(b));
        pass.graph.linear(x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm2d {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPSILON: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: store.add_param(format!("{name}.gamma"), Tensor::ones([channels])),
            beta: store.add_param(format!("{name}.beta"), Tensor::zeros([channels])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros([channels])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::ones([channels])),
            momentum: Self::MOMENTUM,
            epsilon: Self::EPSILON,
        }
    }

    /// Train mode queues a running-statistics update on the pass; eval mode
    /// reads the stored statistics only.
    pub fn forward(&self, pass: &mut Pass<'_>, x: Var) -> Result<Var> {
        let (gamma, beta) = (pass.var(self.gamma), pass.var(self.beta));
        match pass.mode {
            Mode::Train => {
                let (y, stats) = pass.graph.batchnorm_train(x, gamma, beta, self.epsilon)?;
                pass.updates.push(RunningUpdate {
                    mean: self.running_mean,
                    var: self.running_var,
                    batch_mean: stats.mean,
                    batch_var: stats.var_unbiased,
                    momentum: self.momentum,
                });
                Ok(y)
            }
            Mode::Eval => {
                let store = pass.store;
                pass.graph.batchnorm_eval(
                    x,
                    gamma,
                    beta,
                    store.buffer(self.running_mean).data(),
                    store.buffer(self.running_var).data(),
                    self.epsilon,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{finite_diff_check, Graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_identity() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::new(&mut store, "fc", 3, 3, true, Init::XavierUniform, &mut rng);
        let eye = Tensor::from_fn([3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        *store.param_mut(lin.weight) = eye;
        let mut g = Graph::new();
        let bound = store.bind(&mut g, false);
        let mut pass = Pass::new(&mut g, &bound, &store, Mode::Eval);
        let input = Tensor::new([2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        let x = pass.graph.constant(input.clone());
        let y = lin.forward(&mut pass, x).unwrap();
        assert_eq!(g.value(y), &input);
    }

    #[test]
    fn linear_hand_arithmetic() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new([1, 2], vec![1.0, 1.0]).unwrap());
        let w = g.constant(Tensor::new([1, 2], vec![2.0, 3.0]).unwrap());
        let b = g.constant(Tensor::scalar(1.0));
        let y = g.linear(x, w, Some(b)).unwrap();
        assert_eq!(g.value(y).data(), &[6.0]);
    }

    #[test]
    fn linear_dimension_error() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros([1, 3]));
        let w = g.constant(Tensor::zeros([1, 2]));
        assert!(g.linear(x, w, None).is_err());
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        use rand::Rng;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut r = |s: &[usize]| Tensor::from_fn(s.to_vec(), |_| rng.gen_range(-1.0..1.0));
            let (x, w, b, p) = (r(&[4, 5]), r(&[3, 5]), r(&[3]), r(&[4, 3]));
            let build = |g: &mut Graph, x: Var, w: Var, b: Var| -> Result<Var> {
                let y = g.linear(x, w, Some(b))?;
                let pv = g.constant(p.clone());
                let y = g.mul(y, pv)?;
                g.sum(y)
            };
            let ex = finite_diff_check(
                |g, v| {
                    let (w, b) = (g.constant(w.clone()), g.constant(b.clone()));
                    build(g, v, w, b)
                },
                &x,
                1e-5,
            )
            .unwrap();
            let ew = finite_diff_check(
                |g, v| {
                    let (x, b) = (g.constant(x.clone()), g.constant(b.clone()));
                    build(g, x, v, b)
                },
                &w,
                1e-5,
            )
            .unwrap();
            let eb = finite_diff_check(
                |g, v| {
                    let (x, w) = (g.constant(x.clone()), g.constant(w.clone()));
                    build(g, x, w, v)
                },
                &b,
                1e-5,
            )
            .unwrap();
            assert!(ex < 1e-4 && ew < 1e-4 && eb < 1e-4, "seed {seed}: {ex} {ew} {eb}");
        }
    }

    #[test]
    fn activation_gradients_match_finite_differences() {
        use rand::Rng;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // keep ReLU inputs away from the kink
            let x = Tensor::from_fn([2, 3, 8, 8], |_| {
                let v: f64 = rng.gen_range(0.05..2.0);
                if rng.gen_bool(0.5) { v } else { -v }
            });
            let p = Tensor::from_fn([2, 3, 8, 8], |_| rng.gen_range(-1.0..1.0));
            for act in [Activation::Relu, Activation::Sigmoid] {
                let err = finite_diff_check(
                    |g, v| {
                        let y = match act {
                            Activation::Relu => g.relu(v)?,
                            Activation::Sigmoid => g.sigmoid(v)?,
                        };
                        let pv = g.constant(p.clone());
                        let y = g.mul(y, pv)?;
                        g.sum(y)
                    },
                    &x,
                    1e-5,
                )
                .unwrap();
                assert!(err < 1e-4, "seed {seed} {act:?}: {err}");
            }
        }
    }

    #[test]
    fn eval_batchnorm_does_not_mutate_state() {
        let mut store = ParamStore::new();
        let bn = BatchNorm2d::new(&mut store, "bn", 2);
        let before = store.clone();
        let mut g = Graph::new();
        let bound = store.bind(&mut g, false);
        let mut pass = Pass::new(&mut g, &bound, &store, Mode::Eval);
        let x = pass.graph.constant(Tensor::from_fn([2, 2, 2, 2], |i| i as f64));
        bn.forward(&mut pass, x).unwrap();
        assert!(pass.updates.is_empty());
        assert_eq!(store, before);
    }
}
