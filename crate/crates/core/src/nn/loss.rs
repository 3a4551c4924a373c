use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Predictions are clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]` before the log.
pub const PROB_FLOOR: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Mean clamped binary cross-entropy of plain values.
pub fn bce(pred: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = pred
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp(p);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / labels.len() as f64
}

pub(crate) fn bce_backward(pred: &[f64], labels: &[f64], upstream: f64) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if p < PROB_FLOOR || p > 1.0 - PROB_FLOOR {
                return 0.0;
            }
            upstream * (-y / p + (1.0 - y) / (1.0 - p)) / n
        })
        .collect()
}

impl Graph {
    /// Mean binary cross-entropy `-[y ln p + (1 - y) ln(1 - p)]` over the batch.
    pub fn bce_loss(&mut self, pred: Var, labels: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.numel() != labels.len() {
            return Err(Error::dim(format!(
                "bce: {} predictions for {} labels",
                p.numel(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::contract(format!("bce label {bad} is not 0 or 1")));
        }
        let loss = Tensor::scalar(bce(p.data(), labels));
        self.push(loss, Op::Bce { pred, labels: labels.to_vec() }, &[Some(pred)])
    }
}
