use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2×2 max-pool with stride 2. Returns the pooled tensor and, for every output
/// element, the flat input index that won its window (first index on ties).
pub(crate) fn maxpool2x2_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = *x.shape() else {
        return Err(Error::dim(format!("maxpool2x2 input must be N×C×H×W, got {:?}", x.shape())));
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(format!("maxpool2x2 needs even H and W, got {h}×{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new([n, c, oh, ow], out)?, argmax))
}

impl Graph {
    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = maxpool2x2_forward(self.value(x))?;
        self.push(out, Op::MaxPool2x2 { x, argmax }, &[Some(x)])
    }
}
