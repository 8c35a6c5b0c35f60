//! Single-direction LSTM over a padded batch, recorded as one tape node.
//!
//! Gate layout along the `4h` axis is `[input, forget, candidate, output]`.
//! Row `b` only runs over its first `lengths[b]` positions; later positions
//! produce zero output and receive no gradient. A reversed pass runs from
//! `lengths[b] - 1` down to 0, so padding never leaks into either direction.

use super::ops::sigmoid_scalar;
use super::{Graph, Grads, Op, Var};
use crate::error::{Error, Result};
use crate::scalar::{matmul_into, matmul_nt_into, matmul_tn_into, Scalar};
use crate::tensor::Tensor;

pub(crate) struct LstmCache<T> {
    pub(crate) x: Var,
    pub(crate) w_ih: Var,
    pub(crate) w_hh: Var,
    pub(crate) b: Var,
    lengths: Vec<usize>,
    reverse: bool,
    hidden: usize,
    /// Post-activation gates, `[B, T, 4h]`.
    gates: Vec<T>,
    /// Cell states, `[B, T, h]`.
    cells: Vec<T>,
}

/// Time index visited by row `len` at step `s`.
fn time_at(len: usize, s: usize, reverse: bool) -> usize {
    if reverse {
        len - 1 - s
    } else {
        s
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Runs one LSTM direction over `x: [B, T, d]`, returning `[B, T, h]`.
    pub fn lstm(
        &mut self,
        x: Var,
        lengths: &[usize],
        w_ih: Var,
        w_hh: Var,
        b: Var,
        reverse: bool,
    ) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(Error::invalid("lstm", format!("input must be [B, T, d], got {sx:?}")));
        }
        let (batch, steps, d) = (sx[0], sx[1], sx[2]);
        let sw = self.shape(w_ih).to_vec();
        if sw.len() != 2 || sw[0] != d || sw[1] % 4 != 0 {
            return Err(Error::ShapeMismatch {
                op: "lstm",
                left: sx,
                right: sw,
            });
        }
        let h = sw[1] / 4;
        if self.shape(w_hh) != [h, 4 * h] || self.shape(b) != [4 * h] {
            return Err(Error::ShapeMismatch {
                op: "lstm",
                left: vec![h, 4 * h],
                right: self.shape(w_hh).to_vec(),
            });
        }
        if lengths.len() != batch {
            return Err(Error::invalid("lstm", "one length per batch row required"));
        }
        if lengths.iter().any(|&l| l == 0) {
            return Err(Error::EmptySequence { op: "lstm" });
        }
        if lengths.iter().any(|&l| l > steps) {
            return Err(Error::invalid("lstm", "length exceeds padded width"));
        }

        let g4 = 4 * h;
        // Input contribution for every position at once.
        let mut pre = vec![T::zero(); batch * steps * g4];
        {
            let bias = self.value(b).data();
            for row in pre.chunks_exact_mut(g4) {
                row.copy_from_slice(bias);
            }
        }
        matmul_into(
            self.value(x).data(),
            self.value(w_ih).data(),
            &mut pre,
            batch * steps,
            d,
            g4,
            true,
        );

        let whh = self.value(w_hh).data();
        let mut out = vec![T::zero(); batch * steps * h];
        let mut cells = vec![T::zero(); batch * steps * h];
        let mut gates = vec![T::zero(); batch * steps * g4];
        let mut h_prev = vec![T::zero(); batch * h];
        let mut c_prev = vec![T::zero(); batch * h];
        let mut rec = vec![T::zero(); batch * g4];
        let max_len = *lengths.iter().max().unwrap();
        for s in 0..max_len {
            matmul_into(&h_prev, whh, &mut rec, batch, h, g4, false);
            for bi in 0..batch {
                if s >= lengths[bi] {
                    continue;
                }
                let t = time_at(lengths[bi], s, reverse);
                let base = bi * steps + t;
                let pg = &pre[base * g4..(base + 1) * g4];
                let rg = &rec[bi * g4..(bi + 1) * g4];
                let gs = &mut gates[base * g4..(base + 1) * g4];
                for j in 0..g4 {
                    let z = pg[j] + rg[j];
                    gs[j] = if (2 * h..3 * h).contains(&j) {
                        z.tanh()
                    } else {
                        sigmoid_scalar(z)
                    };
                }
                for j in 0..h {
                    let (i, f, gc, o) = (gs[j], gs[h + j], gs[2 * h + j], gs[3 * h + j]);
                    let c = f * c_prev[bi * h + j] + i * gc;
                    let hv = o * c.tanh();
                    cells[base * h + j] = c;
                    out[base * h + j] = hv;
                    c_prev[bi * h + j] = c;
                    h_prev[bi * h + j] = hv;
                }
            }
        }

        let cache = LstmCache {
            x,
            w_ih,
            w_hh,
            b,
            lengths: lengths.to_vec(),
            reverse,
            hidden: h,
            gates,
            cells,
        };
        self.push(
            Tensor::new(vec![batch, steps, h], out)?,
            Op::Lstm(Box::new(cache)),
        )
    }
}

pub(super) fn backward<T: Scalar>(
    g: &Graph<'_, T>,
    cache: &LstmCache<T>,
    y: &Tensor<T>,
    dy: &[T],
    grads: &mut Grads<T>,
) {
    let sx = g.shape(cache.x);
    let (batch, steps, d) = (sx[0], sx[1], sx[2]);
    let h = cache.hidden;
    let g4 = 4 * h;
    let out = y.data();
    let whh = g.value(cache.w_hh).data();
    let one = T::one();

    // Gradient w.r.t. gate pre-activations, and the previous hidden state
    // that fed each position (zero at the start of a sequence).
    let mut dgates = vec![T::zero(); batch * steps * g4];
    let mut h_in = vec![T::zero(); batch * steps * h];
    let mut dh_next = vec![T::zero(); batch * h];
    let mut dc_next = vec![T::zero(); batch * h];
    let mut step_dg = vec![T::zero(); batch * g4];
    let max_len = *cache.lengths.iter().max().unwrap();

    for s in (0..max_len).rev() {
        step_dg.fill(T::zero());
        for bi in 0..batch {
            let len = cache.lengths[bi];
            if s >= len {
                continue;
            }
            let t = time_at(len, s, cache.reverse);
            let base = bi * steps + t;
            let prev = if s == 0 {
                None
            } else {
                Some(bi * steps + time_at(len, s - 1, cache.reverse))
            };
            let gs = &cache.gates[base * g4..(base + 1) * g4];
            for j in 0..h {
                let (i, f, gc, o) = (gs[j], gs[h + j], gs[2 * h + j], gs[3 * h + j]);
                let c = cache.cells[base * h + j];
                let tc = c.tanh();
                let c_before = prev.map_or(T::zero(), |p| cache.cells[p * h + j]);
                let dh = dy[base * h + j] + dh_next[bi * h + j];
                let dc = dc_next[bi * h + j] + dh * o * (one - tc * tc);
                let sg = &mut step_dg[bi * g4..(bi + 1) * g4];
                sg[j] = dc * gc * i * (one - i);
                sg[h + j] = dc * c_before * f * (one - f);
                sg[2 * h + j] = dc * i * (one - gc * gc);
                sg[3 * h + j] = dh * tc * o * (one - o);
                dc_next[bi * h + j] = dc * f;
                if let Some(p) = prev {
                    h_in[base * h + j] = out[p * h + j];
                }
            }
            dgates[base * g4..(base + 1) * g4].copy_from_slice(&step_dg[bi * g4..(bi + 1) * g4]);
        }
        // Rows inactive at this step carry zero gate gradients, so their
        // recurrent gradient is cleanly reset.
        matmul_nt_into(&step_dg, whh, &mut dh_next, batch, g4, h, false);
    }

    let rows = batch * steps;
    if let Some(dx) = grads.slot(cache.x, rows * d) {
        matmul_nt_into(&dgates, g.value(cache.w_ih).data(), dx, rows, g4, d, true);
    }
    if let Some(dw) = grads.slot(cache.w_ih, d * g4) {
        matmul_tn_into(g.value(cache.x).data(), &dgates, dw, d, rows, g4, true);
    }
    if let Some(dw) = grads.slot(cache.w_hh, h * g4) {
        matmul_tn_into(&h_in, &dgates, dw, h, rows, g4, true);
    }
    if let Some(db) = grads.slot(cache.b, g4) {
        for row in dgates.chunks_exact(g4) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
}
