//! 1-d convolution over time followed by ReLU and max-over-time pooling.

use super::{Graph, Grads, Op, Var};
use crate::error::{Error, Result};
use crate::scalar::{matmul_into, matmul_nt_into, matmul_tn_into, Scalar};
use crate::tensor::Tensor;

pub(crate) struct ConvCache<T> {
    pub(crate) x: Var,
    pub(crate) w: Var,
    pub(crate) b: Var,
    /// Unfolded input windows, `[R * P, k * d]`.
    windows: Vec<T>,
    /// Winning window per (row, filter).
    argmax: Vec<usize>,
    /// Pre-activation maximum per (row, filter).
    peak: Vec<T>,
    positions: usize,
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// `x: [R, L, d]`, filters `w: [k * d, f]` (window-major, channel-minor),
    /// bias `b: [f]`; returns `[R, f]` = max over positions of
    /// `ReLU(window · w + b)`.
    pub fn conv1d_maxpool(&mut self, x: Var, w: Var, b: Var, kernel: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 3 || sw.len() != 2 || kernel == 0 || sw[0] != kernel * sx[2] {
            return Err(Error::ShapeMismatch {
                op: "conv1d_maxpool",
                left: sx,
                right: sw,
            });
        }
        let (rows, len, d) = (sx[0], sx[1], sx[2]);
        let f = sw[1];
        if self.shape(b) != [f] {
            return Err(Error::ShapeMismatch {
                op: "conv1d_maxpool(bias)",
                left: sw,
                right: self.shape(b).to_vec(),
            });
        }
        if len < kernel {
            return Err(Error::invalid(
                "conv1d_maxpool",
                format!("sequence of {len} shorter than kernel width {kernel}"),
            ));
        }
        let positions = len - kernel + 1;
        let kd = kernel * d;
        let xv = self.value(x).data();
        let mut windows = Vec::with_capacity(rows * positions * kd);
        for r in 0..rows {
            let row = &xv[r * len * d..(r + 1) * len * d];
            for p in 0..positions {
                windows.extend_from_slice(&row[p * d..p * d + kd]);
            }
        }
        let mut conv = vec![T::zero(); rows * positions * f];
        {
            let bias = self.value(b).data();
            for chunk in conv.chunks_exact_mut(f) {
                chunk.copy_from_slice(bias);
            }
        }
        matmul_into(&windows, self.value(w).data(), &mut conv, rows * positions, kd, f, true);

        let mut out = vec![T::zero(); rows * f];
        let mut argmax = vec![0usize; rows * f];
        let mut peak = vec![T::zero(); rows * f];
        for r in 0..rows {
            for j in 0..f {
                let mut best = 0;
                let mut best_v = conv[r * positions * f + j];
                for p in 1..positions {
                    let v = conv[(r * positions + p) * f + j];
                    if v > best_v {
                        best = p;
                        best_v = v;
                    }
                }
                argmax[r * f + j] = best;
                peak[r * f + j] = best_v;
                out[r * f + j] = best_v.max(T::zero());
            }
        }
        let cache = ConvCache {
            x,
            w,
            b,
            windows,
            argmax,
            peak,
            positions,
        };
        self.push(
            Tensor::new(vec![rows, f], out)?,
            Op::ConvMaxPool(Box::new(cache)),
        )
    }
}

pub(super) fn backward<T: Scalar>(g: &Graph<'_, T>, c: &ConvCache<T>, dy: &[T], grads: &mut Grads<T>) {
    let sx = g.shape(c.x);
    let (rows, len, d) = (sx[0], sx[1], sx[2]);
    let sw = g.shape(c.w);
    let (kd, f) = (sw[0], sw[1]);
    let p = c.positions;
    let mut dconv = vec![T::zero(); rows * p * f];
    for r in 0..rows {
        for j in 0..f {
            if c.peak[r * f + j] > T::zero() {
                dconv[(r * p + c.argmax[r * f + j]) * f + j] = dy[r * f + j];
            }
        }
    }
    if let Some(dw) = grads.slot(c.w, kd * f) {
        matmul_tn_into(&c.windows, &dconv, dw, kd, rows * p, f, true);
    }
    if let Some(db) = grads.slot(c.b, f) {
        for row in dconv.chunks_exact(f) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    if grads.needs(c.x) {
        let mut dwin = vec![T::zero(); rows * p * kd];
        matmul_nt_into(&dconv, g.value(c.w).data(), &mut dwin, rows * p, f, kd, false);
        if let Some(dx) = grads.slot(c.x, rows * len * d) {
            for r in 0..rows {
                for q in 0..p {
                    let src = &dwin[(r * p + q) * kd..(r * p + q + 1) * kd];
                    let dst = &mut dx[r * len * d + q * d..r * len * d + q * d + kd];
                    for (acc, &v) in dst.iter_mut().zip(src) {
                        *acc += v;
                    }
                }
            }
        }
    }
}
