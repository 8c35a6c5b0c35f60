//! Bidirectional attention flow between context and question encodings.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::param::{Init, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Trilinear similarity weights `w_s = [w_c; w_q; w_cq]`, each of width 2h.
#[derive(Debug, Clone)]
pub struct AttentionFlow {
    pub w_s: ParamId,
    pub width: usize,
}

/// Output of the attention layer.
pub struct Attended {
    /// `[B, N, 8h]`.
    pub g: Var,
    /// Masked similarity `[B, N, M]`.
    pub s: Var,
    /// Context-to-query weights `[B, N, M]`.
    pub c2q: Var,
    /// Query-to-context weights `[B, N]`.
    pub q2c: Var,
}

impl AttentionFlow {
    /// `width` is the encoding width 2h.
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, width: usize, seed: u64) -> Result<Self> {
        let k = (1.0 / width as f64).sqrt();
        let w_s = store.add("attention.w_s", &[3 * width], Init::Uniform(-k, k), seed)?;
        Ok(AttentionFlow { w_s, width })
    }

    pub fn apply<T: Scalar>(&self, g: &mut Graph<'_, T>, c: Var, q: Var, c_mask: &[bool], q_mask: &[bool]) -> Result<Attended> {
        let w_s = g.param(self.w_s);
        let s = similarity(g, c, q, w_s, c_mask, q_mask)?;
        let (a_bar, c2q) = context2query(g, s, q, q_mask)?;
        let (b_bar, q2c) = query2context(g, s, c, c_mask)?;
        let out = fuse_g(g, c, a_bar, b_bar)?;
        Ok(Attended { g: out, s, c2q, q2c })
    }
}

/// `S[b,i,j] = w_sᵀ [c_i; q_j; c_i ∘ q_j]`, with masked rows and columns set
/// to the −∞ surrogate.
pub fn similarity<T: Scalar>(g: &mut Graph<'_, T>, c: Var, q: Var, w_s: Var, c_mask: &[bool], q_mask: &[bool]) -> Result<Var> {
    let (sc, sq) = (g.shape(c).to_vec(), g.shape(q).to_vec());
    if sc.len() != 3 || sq.len() != 3 || sc[0] != sq[0] || sc[2] != sq[2] || g.shape(w_s) != [3 * sc[2]] {
        return Err(Error::ShapeMismatch {
            op: "similarity",
            left: sc,
            right: sq,
        });
    }
    let (batch, n, m, d) = (sc[0], sc[1], sq[1], sc[2]);
    if c_mask.len() != batch * n || q_mask.len() != batch * m {
        return Err(Error::invalid("similarity", "mask sizes do not match the inputs"));
    }
    let w_c = g.slice_last(w_s, 0, d)?;
    let w_c = g.reshape(w_c, &[d, 1])?;
    let w_q = g.slice_last(w_s, d, d)?;
    let w_q = g.reshape(w_q, &[d, 1])?;
    let w_cq = g.slice_last(w_s, 2 * d, d)?;
    let w_cq = g.reshape(w_cq, &[1, 1, d])?;

    let from_c = g.linear(c, w_c, None)?;
    let from_q = g.linear(q, w_q, None)?;
    let from_q = g.reshape(from_q, &[batch, 1, m])?;
    let cw = g.broadcast_mul(c, w_cq)?;
    let cross = g.bmm(cw, q, true)?;
    let s = g.broadcast_add(cross, from_c)?;
    let s = g.broadcast_add(s, from_q)?;
    g.masked_fill(s, &pair_mask(c_mask, q_mask, batch, n, m))
}

fn pair_mask(c_mask: &[bool], q_mask: &[bool], batch: usize, n: usize, m: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(batch * n * m);
    for b in 0..batch {
        for i in 0..n {
            for j in 0..m {
                out.push(c_mask[b * n + i] && q_mask[b * m + j]);
            }
        }
    }
    out
}

/// Attention over question words for every context position. Returns the
/// attended vectors `[B, N, 2h]` and the weights.
pub fn context2query<T: Scalar>(g: &mut Graph<'_, T>, s: Var, q: Var, q_mask: &[bool]) -> Result<(Var, Var)> {
    let ss = g.shape(s).to_vec();
    let (batch, n, m) = (ss[0], ss[1], ss[2]);
    let mut mask = Vec::with_capacity(batch * n * m);
    for b in 0..batch {
        for _ in 0..n {
            mask.extend_from_slice(&q_mask[b * m..(b + 1) * m]);
        }
    }
    let a = g.masked_softmax(s, &mask)?;
    let a_bar = g.bmm(a, q, false)?;
    Ok((a_bar, a))
}

/// Attention over context words using each word's best question match.
/// Returns the summary vector `[B, 1, 2h]` and the weights `[B, N]`.
pub fn query2context<T: Scalar>(g: &mut Graph<'_, T>, s: Var, c: Var, c_mask: &[bool]) -> Result<(Var, Var)> {
    let ss = g.shape(s).to_vec();
    let (batch, n) = (ss[0], ss[1]);
    let best = g.max_last(s)?;
    let weights = g.masked_softmax(best, c_mask)?;
    let w3 = g.reshape(weights, &[batch, 1, n])?;
    let b_bar = g.bmm(w3, c, false)?;
    Ok((b_bar, weights))
}

/// `G_i = [c_i; ā_i; c_i ∘ ā_i; c_i ∘ b̄]`.
pub fn fuse_g<T: Scalar>(g: &mut Graph<'_, T>, c: Var, a_bar: Var, b_bar: Var) -> Result<Var> {
    let ca = g.mul(c, a_bar)?;
    let cb = g.broadcast_mul(c, b_bar)?;
    g.concat_last(&[c, a_bar, ca, cb])
}
