use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.params().map(|(_, t)| vec![0.0; t.numel()]).collect();
        AdamState { config, step: 0, first: zeros(), second: zeros() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Refuses non-finite gradients before touching anything.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.first.len() {
            return Err(Error::dim(format!(
                "adam: {} gradients for {} parameters",
                grads.len(),
                self.first.len()
            )));
        }
        for ((name, p), g) in store.params().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::dim(format!(
                    "adam: gradient {:?} for parameter {name} {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for parameter {name}")));
            }
        }

        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in store
            .param_tensors_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add_param("w", Tensor::scalar(w));
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = scalar_store(0.7);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &store);
        adam.step(&mut store, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(store.params().next().unwrap().1.data(), &[0.7]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² after bias correction, so the step is lr·g/(|g| + eps).
        for g in [-3.0, 0.02, 5.0] {
            let mut store = scalar_store(1.0);
            let mut adam = AdamState::new(AdamConfig::with_lr(0.01), &store);
            adam.step(&mut store, &[Tensor::scalar(g)]).unwrap();
            let moved = 1.0 - store.params().next().unwrap().1.data()[0];
            let want = 0.01 * g / (g.abs() + 1e-8);
            assert!((moved - want).abs() < 1e-12, "{moved} vs {want}");
        }
    }

    #[test]
    fn minimises_square() {
        let mut store = scalar_store(1.0);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &store);
        for _ in 0..200 {
            let w = store.params().next().unwrap().1.data()[0];
            adam.step(&mut store, &[Tensor::scalar(2.0 * w)]).unwrap();
        }
        let w = store.params().next().unwrap().1.data()[0];
        assert!(w.abs() < 0.05, "{w}");
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut store = scalar_store(1.0);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &store);
        let err = adam.step(&mut store, &[Tensor::scalar(f64::NAN)]);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!(adam.step_count(), 0);
        assert_eq!(store.params().next().unwrap().1.data(), &[1.0]);
    }
}
