use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// What a batchnorm node keeps for its adjoint.
pub(crate) struct BatchNormSaved {
    pub x: Var,
    pub gamma: Var,
    pub beta: Var,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Train mode: statistics came from the batch itself.
    batch_stats: bool,
}

/// Statistics of one training-mode batch, per channel.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (`m - 1` denominator) variance, the form running stats track.
    pub var_unbiased: Vec<f64>,
}

fn dims(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(usize, usize, usize)> {
    let [n, c, h, w] = *x.shape() else {
        return Err(Error::dim(format!("batchnorm2d input must be N×C×H×W, got {:?}", x.shape())));
    };
    if gamma.numel() != c || beta.numel() != c {
        return Err(Error::dim(format!(
            "batchnorm2d: {c} channels but scale {:?} / shift {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok((n, c, h * w))
}

impl BatchNormSaved {
    pub(crate) fn backward(&self, shape: &[usize], gamma: &[f64], dy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, c, hw) = (shape[0], shape[1], shape[2] * shape[3]);
        let m = (n * hw) as f64;
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                for j in off..off + hw {
                    dgamma[ch] += dy[j] * self.xhat[j];
                    dbeta[ch] += dy[j];
                }
            }
        }
        let mut dx = vec![0.0; dy.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                let k = gamma[ch] * self.inv_std[ch];
                for j in off..off + hw {
                    dx[j] = if self.batch_stats {
                        k / m * (m * dy[j] - dbeta[ch] - self.xhat[j] * dgamma[ch])
                    } else {
                        k * dy[j]
                    };
                }
            }
        }
        (dx, dgamma, dbeta)
    }
}

impl Graph {
    /// Normalises each channel by its batch mean and (biased) variance, then
    /// applies `gamma · x̂ + beta`.
    pub fn batchnorm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let (xt, gt, bt) = (self.value(x), self.value(gamma), self.value(beta));
        let (n, c, hw) = dims(xt, gt, bt)?;
        let m = n * hw;
        if m < 2 {
            return Err(Error::contract(format!(
                "batchnorm2d train mode needs at least 2 values per channel, got {m}"
            )));
        }
        let data = xt.data();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                mean[ch] += data[off..off + hw].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                var[ch] += data[off..off + hw].iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= m as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (xhat, out) = normalize(data, n, c, hw, &mean, &inv_std, gt.data(), bt.data());
        let stats = BatchStats {
            mean,
            var_unbiased: var.iter().map(|v| v * m as f64 / (m - 1) as f64).collect(),
        };
        let out = Tensor::new(xt.shape().to_vec(), out)?;
        let saved = BatchNormSaved { x, gamma, beta, xhat, inv_std, batch_stats: true };
        let y = self.push(out, Op::BatchNorm(saved), &[Some(x), Some(gamma), Some(beta)])?;
        Ok((y, stats))
    }

    /// Normalises with stored running statistics; touches no state.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (xt, gt, bt) = (self.value(x), self.value(gamma), self.value(beta));
        let (n, c, hw) = dims(xt, gt, bt)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::dim("batchnorm2d running statistics do not match channels"));
        }
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (xhat, out) = normalize(xt.data(), n, c, hw, running_mean, &inv_std, gt.data(), bt.data());
        let out = Tensor::new(xt.shape().to_vec(), out)?;
        let saved = BatchNormSaved { x, gamma, beta, xhat, inv_std, batch_stats: false };
        self.push(out, Op::BatchNorm(saved), &[Some(x), Some(gamma), Some(beta)])
    }
}

#[allow(clippy::too_many_arguments)]
fn normalize(
    data: &[f64],
    n: usize,
    c: usize,
    hw: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; data.len()];
    let mut out = vec![0.0; data.len()];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            for j in off..off + hw {
                xhat[j] = (data[j] - mean[ch]) * inv_std[ch];
                out[j] = gamma[ch] * xhat[j] + beta[ch];
            }
        }
    }
    (xhat, out)
}
