//! Dense primitives: forward constructors on [`Graph`] and their pullbacks.

use super::{BinKind, Graph, Grads, Op, Var};
use crate::error::{Error, Result};
use crate::scalar::{matmul_into, matmul_nt_into, matmul_tn_into, Scalar};
use crate::tensor::Tensor;

/// Value used in place of −∞ for masked logits.
pub const MASK_FILL: f64 = -1e30;

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    sigmoid(x)
}

/// For every element of `a_shape`, the flat index of the element of `b_shape`
/// it pairs with under broadcasting (equal rank, `b` dims equal or 1).
fn broadcast_map(a_shape: &[usize], b_shape: &[usize]) -> Option<Vec<usize>> {
    if a_shape.len() != b_shape.len() {
        return None;
    }
    if a_shape
        .iter()
        .zip(b_shape)
        .any(|(&a, &b)| b != a && b != 1)
    {
        return None;
    }
    let rank = a_shape.len();
    let mut b_strides = vec![0usize; rank];
    let mut stride = 1;
    for d in (0..rank).rev() {
        b_strides[d] = if b_shape[d] == 1 { 0 } else { stride };
        stride *= b_shape[d];
    }
    let numel: usize = a_shape.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..numel {
        map.push(offset);
        for d in (0..rank).rev() {
            idx[d] += 1;
            offset += b_strides[d];
            if idx[d] < a_shape[d] {
                break;
            }
            offset -= b_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Some(map)
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Matrix product of two 2-d tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n, false);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b))
    }

    /// `x · W (+ b)` applied to the trailing axis of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let k = *sx.last().unwrap();
        if sw.len() != 2 || sw[0] != k {
            return Err(mismatch("linear", &sx, &sw));
        }
        let n = sw[1];
        if let Some(b) = b {
            if self.shape(b) != [n] {
                return Err(mismatch("linear(bias)", &sw, self.shape(b)));
            }
        }
        let rows = self.value(x).numel() / k;
        let mut out = vec![T::zero(); rows * n];
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_exact_mut(n) {
                row.copy_from_slice(bias);
            }
        }
        matmul_into(
            self.value(x).data(),
            self.value(w).data(),
            &mut out,
            rows,
            k,
            n,
            b.is_some(),
        );
        let mut shape = sx;
        *shape.last_mut().unwrap() = n;
        self.push(Tensor::new(shape, out)?, Op::Linear { x, w, b })
    }

    fn zip_same(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op.name(), self.shape(a), self.shape(b)));
        }
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, out)?, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn broadcast(&mut self, a: Var, b: Var, kind: BinKind) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let map = broadcast_map(&sa, &sb).ok_or_else(|| mismatch("broadcast", &sa, &sb))?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let out: Vec<T> = va
            .iter()
            .zip(&map)
            .map(|(&x, &j)| match kind {
                BinKind::Add => x + vb[j],
                BinKind::Mul => x * vb[j],
            })
            .collect();
        self.push(Tensor::new(sa, out)?, Op::Broadcast { a, b, kind, map })
    }

    /// `a + b` where `b` has the rank of `a` and every axis either equal or 1.
    pub fn broadcast_add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast(a, b, BinKind::Add)
    }

    /// `a ∘ b` with the broadcasting rule of [`Graph::broadcast_add`].
    pub fn broadcast_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast(a, b, BinKind::Mul)
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let (s, c) = (T::lit(scale), T::lit(shift));
        let t = self.value(x);
        let out: Vec<T> = t.data().iter().map(|&v| s * v + c).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Affine { x, scale: s })
    }

    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        self.affine(x, -1.0, 1.0)
    }

    fn unary(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Result<Var> {
        let t = self.value(x);
        let out: Vec<T> = t.data().iter().map(|&v| f(v)).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, out)?, op)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Tanh(x), |v| v.tanh())
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Relu(x), |v| if v > T::zero() { v } else { T::zero() })
    }

    /// Concatenation along the trailing axis; leading axes must agree.
    pub fn concat_last(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let lead = {
            let s = self.shape(*first);
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            if s[..s.len() - 1] != lead[..] {
                return Err(mismatch("concat", self.shape(*first), s));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&v, &w) in inputs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(v).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                widths,
            },
        )
    }

    /// Columns `start..start + width` of the trailing axis.
    pub fn slice_last(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().unwrap();
        if width == 0 || start + width > d {
            return Err(Error::invalid(
                "slice",
                format!("columns {start}..{} out of width {d}", start + width),
            ));
        }
        let out: Vec<T> = self
            .value(x)
            .data()
            .chunks_exact(d)
            .flat_map(|row| row[start..start + width].iter().copied())
            .collect();
        let mut shape = s;
        *shape.last_mut().unwrap() = width;
        self.push(Tensor::new(shape, out)?, Op::Slice { x, start, width })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(t, Op::Reshape(x))
    }

    /// Replaces entries where `mask` is false by [`MASK_FILL`].
    pub fn masked_fill(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let t = self.value(x);
        if t.numel() != mask.len() {
            return Err(mismatch("masked_fill", t.shape(), &[mask.len()]));
        }
        let fill = T::lit(MASK_FILL);
        let out: Vec<T> = t
            .data()
            .iter()
            .zip(mask)
            .map(|(&v, &keep)| if keep { v } else { fill })
            .collect();
        let shape = t.shape().to_vec();
        self.push(
            Tensor::new(shape, out)?,
            Op::MaskedFill {
                x,
                mask: mask.to_vec(),
            },
        )
    }

    fn softmax_rows(&self, x: Var, mask: &[bool], log: bool) -> Result<Tensor<T>> {
        let t = self.value(x);
        if t.numel() != mask.len() {
            return Err(mismatch("masked_softmax", t.shape(), &[mask.len()]));
        }
        let n = t.last_dim();
        let mut out = vec![T::zero(); t.numel()];
        for (row, ((xs, ms), ys)) in t
            .data()
            .chunks_exact(n)
            .zip(mask.chunks_exact(n))
            .zip(out.chunks_exact_mut(n))
            .enumerate()
        {
            let max = xs
                .iter()
                .zip(ms)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.max(v))))
                .ok_or(Error::AllMasked { row })?;
            let mut total = T::zero();
            for ((&v, &m), y) in xs.iter().zip(ms).zip(ys.iter_mut()) {
                if m {
                    *y = (v - max).exp();
                    total += *y;
                }
            }
            if log {
                let log_total = total.ln();
                let fill = T::lit(MASK_FILL);
                for ((&v, &m), y) in xs.iter().zip(ms).zip(ys.iter_mut()) {
                    *y = if m { v - max - log_total } else { fill };
                }
            } else {
                for y in ys.iter_mut() {
                    *y /= total;
                }
            }
        }
        Tensor::new(t.shape().to_vec(), out)
    }

    /// Softmax over the trailing axis. Masked entries get probability exactly
    /// zero; every row needs at least one unmasked entry.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let t = self.softmax_rows(x, mask, false)?;
        self.push(t, Op::Softmax(x))
    }

    /// Log of [`Graph::masked_softmax`]; masked entries hold [`MASK_FILL`].
    pub fn masked_log_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let t = self.softmax_rows(x, mask, true)?;
        self.push(
            t,
            Op::LogSoftmax {
                x,
                mask: mask.to_vec(),
            },
        )
    }

    /// Maximum over the trailing axis (first index wins ties).
    pub fn max_last(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let n = t.last_dim();
        let mut out = Vec::with_capacity(t.numel() / n);
        let mut argmax = Vec::with_capacity(t.numel() / n);
        for row in t.data().chunks_exact(n) {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            argmax.push(best);
            out.push(row[best]);
        }
        let mut shape = t.shape().to_vec();
        shape.pop();
        if shape.is_empty() {
            shape.push(1);
        }
        self.push(Tensor::new(shape, out)?, Op::MaxLast { x, argmax })
    }

    /// Batched product of `[B, n, k]` with `[B, k, m]` (or `[B, m, k]` when
    /// `trans_b`).
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if trans_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(mismatch("bmm", &sa, &sb));
        }
        let (batch, n, k) = (sa[0], sa[1], sa[2]);
        let m = if trans_b { sb[1] } else { sb[2] };
        let mut out = vec![T::zero(); batch * n * m];
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            let ai = &va[i * n * k..(i + 1) * n * k];
            let bi = &vb[i * k * m..(i + 1) * k * m];
            let oi = &mut out[i * n * m..(i + 1) * n * m];
            if trans_b {
                matmul_nt_into(ai, bi, oi, n, k, m, false);
            } else {
                matmul_into(ai, bi, oi, n, k, m, false);
            }
        }
        self.push(Tensor::new(vec![batch, n, m], out)?, Op::Bmm { a, b, trans_b })
    }

    /// Row lookup: output shape is `lead ++ [d]` for a `[V, d]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize], lead: &[usize]) -> Result<Var> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 || lead.iter().product::<usize>() != ids.len() {
            return Err(mismatch("embedding", &st, lead));
        }
        let (vocab, d) = (st[0], st[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::invalid(
                "embedding",
                format!("id {bad} out of range for table of {vocab} rows"),
            ));
        }
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let mut shape = lead.to_vec();
        shape.push(d);
        self.push(
            Tensor::new(shape, out)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Picks `x[r, index[r]]` from each row of the trailing axis.
    pub fn gather_last(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let n = t.last_dim();
        let rows = t.numel() / n;
        if index.len() != rows || index.iter().any(|&i| i >= n) {
            return Err(mismatch("gather", t.shape(), &[index.len()]));
        }
        let out: Vec<T> = index
            .iter()
            .enumerate()
            .map(|(r, &i)| t.data()[r * n + i])
            .collect();
        self.push(
            Tensor::new(vec![rows], out)?,
            Op::GatherLast {
                x,
                index: index.to_vec(),
            },
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s: T = t.data().iter().copied().sum();
        let n = T::lit(t.numel() as f64);
        self.push(Tensor::scalar(s / n), Op::Mean(x))
    }

    /// Elementwise product with a constant buffer (dropout masks, padding
    /// masks).
    pub fn mul_const(&mut self, x: Var, factor: Vec<T>) -> Result<Var> {
        let t = self.value(x);
        if t.numel() != factor.len() {
            return Err(mismatch("mul_const", t.shape(), &[factor.len()]));
        }
        let out: Vec<T> = t.data().iter().zip(&factor).map(|(&a, &b)| a * b).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::MulConst { x, factor })
    }
}

pub(super) fn backward<T: Scalar>(g: &Graph<'_, T>, op: &Op<T>, y: &Tensor<T>, dy: &[T], grads: &mut Grads<T>) {
    match op {
        Op::Leaf | Op::Lstm(_) | Op::ConvMaxPool(_) => unreachable!("handled by the caller"),
        Op::MatMul(a, b) => {
            let (sa, sb) = (g.shape(*a), g.shape(*b));
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            if let Some(da) = grads.slot(*a, m * k) {
                matmul_nt_into(dy, g.value(*b).data(), da, m, n, k, true);
            }
            if let Some(db) = grads.slot(*b, k * n) {
                matmul_tn_into(g.value(*a).data(), dy, db, k, m, n, true);
            }
        }
        Op::Linear { x, w, b } => {
            let sw = g.shape(*w);
            let (k, n) = (sw[0], sw[1]);
            let rows = dy.len() / n;
            if let Some(dx) = grads.slot(*x, rows * k) {
                matmul_nt_into(dy, g.value(*w).data(), dx, rows, n, k, true);
            }
            if let Some(dw) = grads.slot(*w, k * n) {
                matmul_tn_into(g.value(*x).data(), dy, dw, k, rows, n, true);
            }
            if let Some(b) = b {
                if let Some(db) = grads.slot(*b, n) {
                    for row in dy.chunks_exact(n) {
                        for (acc, &v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                }
            }
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(op, Op::Sub(..)) { -T::one() } else { T::one() };
            if let Some(da) = grads.slot(*a, dy.len()) {
                for (acc, &v) in da.iter_mut().zip(dy) {
                    *acc += v;
                }
            }
            if let Some(db) = grads.slot(*b, dy.len()) {
                for (acc, &v) in db.iter_mut().zip(dy) {
                    *acc += sign * v;
                }
            }
        }
        Op::Mul(a, b) => {
            if let Some(da) = grads.slot(*a, dy.len()) {
                for ((acc, &v), &o) in da.iter_mut().zip(dy).zip(g.value(*b).data()) {
                    *acc += v * o;
                }
            }
            if let Some(db) = grads.slot(*b, dy.len()) {
                for ((acc, &v), &o) in db.iter_mut().zip(dy).zip(g.value(*a).data()) {
                    *acc += v * o;
                }
            }
        }
        Op::Broadcast { a, b, kind, map } => {
            let nb = g.value(*b).numel();
            match kind {
                BinKind::Add => {
                    if let Some(da) = grads.slot(*a, dy.len()) {
                        for (acc, &v) in da.iter_mut().zip(dy) {
                            *acc += v;
                        }
                    }
                    if let Some(db) = grads.slot(*b, nb) {
                        for (&v, &j) in dy.iter().zip(map) {
                            db[j] += v;
                        }
                    }
                }
                BinKind::Mul => {
                    let vb = g.value(*b).data();
                    if let Some(da) = grads.slot(*a, dy.len()) {
                        for ((acc, &v), &j) in da.iter_mut().zip(dy).zip(map) {
                            *acc += v * vb[j];
                        }
                    }
                    let va = g.value(*a).data();
                    if let Some(db) = grads.slot(*b, nb) {
                        for ((&v, &j), &x) in dy.iter().zip(map).zip(va) {
                            db[j] += v * x;
                        }
                    }
                }
            }
        }
        Op::Affine { x, scale } => {
            if let Some(dx) = grads.slot(*x, dy.len()) {
                for (acc, &v) in dx.iter_mut().zip(dy) {
                    *acc += *scale * v;
                }
            }
        }
        Op::Sigmoid(x) | Op::Tanh(x) | Op::Relu(x) => {
            if let Some(dx) = grads.slot(*x, dy.len()) {
                let one = T::one();
                for ((acc, &v), &o) in dx.iter_mut().zip(dy).zip(y.data()) {
                    let local = match op {
                        Op::Sigmoid(_) => o * (one - o),
                        Op::Tanh(_) => one - o * o,
                        _ => {
                            if o > T::zero() {
                                one
                            } else {
                                T::zero()
                            }
                        }
                    };
                    *acc += v * local;
                }
            }
        }
        Op::Concat { inputs, widths } => {
            let total: usize = widths.iter().sum();
            let rows = dy.len() / total;
            let mut offset = 0;
            for (&v, &w) in inputs.iter().zip(widths) {
                if let Some(dv) = grads.slot(v, rows * w) {
                    for r in 0..rows {
                        let src = &dy[r * total + offset..r * total + offset + w];
                        for (acc, &s) in dv[r * w..(r + 1) * w].iter_mut().zip(src) {
                            *acc += s;
                        }
                    }
                }
                offset += w;
            }
        }
        Op::Slice { x, start, width } => {
            let d = g.value(*x).last_dim();
            let n = g.value(*x).numel();
            if let Some(dx) = grads.slot(*x, n) {
                for (r, src) in dy.chunks_exact(*width).enumerate() {
                    for (acc, &s) in dx[r * d + start..r * d + start + width].iter_mut().zip(src) {
                        *acc += s;
                    }
                }
            }
        }
        Op::Reshape(x) => {
            if let Some(dx) = grads.slot(*x, dy.len()) {
                for (acc, &v) in dx.iter_mut().zip(dy) {
                    *acc += v;
                }
            }
        }
        Op::MaskedFill { x, mask } => {
            if let Some(dx) = grads.slot(*x, dy.len()) {
                for ((acc, &v), &keep) in dx.iter_mut().zip(dy).zip(mask) {
                    if keep {
                        *acc += v;
                    }
                }
            }
        }
        Op::Softmax(x) => {
            let n = y.last_dim();
            if let Some(dx) = grads.slot(*x, dy.len()) {
                for ((ys, ds), acc) in y
                    .data()
                    .chunks_exact(n)
                    .zip(dy.chunks_exact(n))
                    .zip(dx.chunks_exact_mut(n))
                {
                    let dot: T = ys.iter().zip(ds).map(|(&p, &d)| p * d).sum();
                    for ((a, &p), &d) in acc.iter_mut().zip(ys).zip(ds) {
                        *a += p * (d - dot);
                    }
                }
            }
        }
        Op::LogSoftmax { x, mask } => {
            let n = y.last_dim();
            if let Some(dx) = grads.slot(*x, dy.len()) {
                for (((ys, ds), ms), acc) in y
                    .data()
                    .chunks_exact(n)
                    .zip(dy.chunks_exact(n))
                    .zip(mask.chunks_exact(n))
                    .zip(dx.chunks_exact_mut(n))
                {
                    let total: T = ds
                        .iter()
                        .zip(ms)
                        .filter(|(_, &m)| m)
                        .map(|(&d, _)| d)
                        .sum();
                    for (((a, &ly), &d), &m) in acc.iter_mut().zip(ys).zip(ds).zip(ms) {
                        if m {
                            *a += d - ly.exp() * total;
                        }
                    }
                }
            }
        }
        Op::MaxLast { x, argmax } => {
            let t = g.value(*x);
            let n = t.last_dim();
            if let Some(dx) = grads.slot(*x, t.numel()) {
                for (r, (&j, &d)) in argmax.iter().zip(dy).enumerate() {
                    dx[r * n + j] += d;
                }
            }
        }
        Op::Bmm { a, b, trans_b } => {
            let (sa, sb) = (g.shape(*a).to_vec(), g.shape(*b).to_vec());
            let (batch, n, k) = (sa[0], sa[1], sa[2]);
            let m = if *trans_b { sb[1] } else { sb[2] };
            let (va, vb) = (g.value(*a).data(), g.value(*b).data());
            if let Some(da) = grads.slot(*a, batch * n * k) {
                for i in 0..batch {
                    let di = &dy[i * n * m..(i + 1) * n * m];
                    let bi = &vb[i * k * m..(i + 1) * k * m];
                    let ai = &mut da[i * n * k..(i + 1) * n * k];
                    if *trans_b {
                        // dA = dY · B  with B stored [m, k]
                        matmul_into(di, bi, ai, n, m, k, true);
                    } else {
                        matmul_nt_into(di, bi, ai, n, m, k, true);
                    }
                }
            }
            if let Some(db) = grads.slot(*b, batch * k * m) {
                for i in 0..batch {
                    let di = &dy[i * n * m..(i + 1) * n * m];
                    let ai = &va[i * n * k..(i + 1) * n * k];
                    let bi = &mut db[i * k * m..(i + 1) * k * m];
                    if *trans_b {
                        // dB[m, k] = dYᵀ · A
                        matmul_tn_into(di, ai, bi, m, n, k, true);
                    } else {
                        matmul_tn_into(ai, di, bi, k, n, m, true);
                    }
                }
            }
        }
        Op::Embedding { table, ids } => {
            let t = g.value(*table);
            let d = t.last_dim();
            if let Some(dt) = grads.slot(*table, t.numel()) {
                for (&i, src) in ids.iter().zip(dy.chunks_exact(d)) {
                    for (acc, &s) in dt[i * d..(i + 1) * d].iter_mut().zip(src) {
                        *acc += s;
                    }
                }
            }
        }
        Op::GatherLast { x, index } => {
            let t = g.value(*x);
            let n = t.last_dim();
            if let Some(dx) = grads.slot(*x, t.numel()) {
                for (r, (&i, &d)) in index.iter().zip(dy).enumerate() {
                    dx[r * n + i] += d;
                }
            }
        }
        Op::Sum(x) | Op::Mean(x) => {
            let numel = g.value(*x).numel();
            let scale = if matches!(op, Op::Mean(_)) {
                dy[0] / T::lit(numel as f64)
            } else {
                dy[0]
            };
            if let Some(dx) = grads.slot(*x, numel) {
                for acc in dx.iter_mut() {
                    *acc += scale;
                }
            }
        }
        Op::MulConst { x, factor } => {
            if let Some(dx) = grads.slot(*x, dy.len()) {
                for ((acc, &v), &f) in dx.iter_mut().zip(dy).zip(factor) {
                    *acc += v * f;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_map_covers_middle_and_trailing_axes() {
        // [2,3,2] against [2,1,2]
        let map = broadcast_map(&[2, 3, 2], &[2, 1, 2]).unwrap();
        assert_eq!(map, vec![0, 1, 0, 1, 0, 1, 2, 3, 2, 3, 2, 3]);
        // [2,2] against [1,2]
        assert_eq!(broadcast_map(&[2, 2], &[1, 2]).unwrap(), vec![0, 1, 0, 1]);
        // [2,2] against [2,1]
        assert_eq!(broadcast_map(&[2, 2], &[2, 1]).unwrap(), vec![0, 0, 1, 1]);
        assert!(broadcast_map(&[2, 2], &[3, 1]).is_none());
    }
}
