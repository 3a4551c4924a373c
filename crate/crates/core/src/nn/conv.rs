//! 3×3 convolution, stride 1, zero padding 1, lowered to im2col + GEMM.

use rayon::prelude::*;

use crate::autograd::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Unfolds one `C×H×W` image into a `(C·9)×(H·W)` patch matrix.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, col: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y + ky;
                    if sy < 1 || sy > h {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[(sy - 1) * w..sy * w];
                    out[..x_lo].fill(0.0);
                    out[x_hi..].fill(0.0);
                    for xx in x_lo..x_hi {
                        out[xx] = src[xx + kx - 1];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im_add(col: &[f64], c: usize, h: usize, w: usize, dx: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                for y in 0..h {
                    let sy = y + ky;
                    if sy < 1 || sy > h {
                        continue;
                    }
                    let dst = &mut plane[(sy - 1) * w..sy * w];
                    let src = &row[y * w..(y + 1) * w];
                    for xx in x_lo..x_hi {
                        dst[xx + kx - 1] += src[xx];
                    }
                }
            }
        }
    }
}

fn conv_dims(x: &Tensor, w: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    let [n, cin, h, wd] = x.shape() else {
        return Err(Error::dim(format!("conv3x3 input must be N×C×H×W, got {:?}", x.shape())));
    };
    let [cout, wcin, 3, 3] = w.shape() else {
        return Err(Error::dim(format!("conv3x3 weight must be O×I×3×3, got {:?}", w.shape())));
    };
    if cin != wcin {
        return Err(Error::dim(format!(
            "conv3x3: input has {cin} channels, weight {:?} expects {wcin}",
            w.shape()
        )));
    }
    Ok((*n, *cin, *h, *wd, *cout))
}

pub(crate) fn conv3x3_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (n, cin, h, wd, cout) = conv_dims(x, w)?;
    if let Some(b) = b {
        if b.numel() != cout {
            return Err(Error::dim(format!("conv3x3 bias {:?} for {cout} outputs", b.shape())));
        }
    }
    let hw = h * wd;
    let k = cin * 9;
    let mut out = vec![0.0; n * cout * hw];
    out.par_chunks_mut(cout * hw).enumerate().for_each(|(i, y)| {
        let mut col = vec![0.0; k * hw];
        im2col(&x.data()[i * cin * hw..(i + 1) * cin * hw], cin, h, wd, &mut col);
        if let Some(b) = b {
            for (co, plane) in y.chunks_mut(hw).enumerate() {
                plane.fill(b.data()[co]);
            }
        }
        gemm(cout, k, hw, w.data(), false, &col, false, y, 1.0);
    });
    Tensor::new([n, cout, h, wd], out)
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn conv3x3_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &[f64],
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> ConvGrads {
    let (n, cin, h, wd, cout) = conv_dims(x, w).expect("shapes checked in forward");
    let hw = h * wd;
    let k = cin * 9;

    // Per-image partials, reduced afterwards in image order so the result
    // does not depend on how the work was scheduled.
    let partials: Vec<(Option<Vec<f64>>, Option<Vec<f64>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dyi = &dy[i * cout * hw..(i + 1) * cout * hw];
            let mut col = vec![0.0; k * hw];
            let dw = need_dw.then(|| {
                im2col(&x.data()[i * cin * hw..(i + 1) * cin * hw], cin, h, wd, &mut col);
                let mut dw = vec![0.0; cout * k];
                gemm(cout, hw, k, dyi, false, &col, true, &mut dw, 0.0);
                dw
            });
            let dx = need_dx.then(|| {
                gemm(k, cout, hw, w.data(), true, dyi, false, &mut col, 0.0);
                let mut dx = vec![0.0; cin * hw];
                col2im_add(&col, cin, h, wd, &mut dx);
                dx
            });
            (dx, dw)
        })
        .collect();

    let mut dx = need_dx.then(|| Vec::with_capacity(n * cin * hw));
    let mut dw = need_dw.then(|| vec![0.0; cout * k]);
    for (pdx, pdw) in partials {
        if let (Some(acc), Some(p)) = (dx.as_mut(), pdx) {
            acc.extend_from_slice(&p);
        }
        if let (Some(acc), Some(p)) = (dw.as_mut(), pdw) {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += v;
            }
        }
    }
    let db = need_db.then(|| {
        let mut db = vec![0.0; cout];
        for img in dy.chunks(cout * hw) {
            for (co, plane) in img.chunks(hw).enumerate() {
                db[co] += plane.iter().sum::<f64>();
            }
        }
        db
    });
    ConvGrads { dx, dw, db }
}

impl Graph {
    /// "Same" 3×3 convolution: `N×Cin×H×W → N×Cout×H×W`.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let out = conv3x3_forward(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        self.push(out, Op::Conv3x3 { x, w, b }, &[Some(x), Some(w), b])
    }
}
