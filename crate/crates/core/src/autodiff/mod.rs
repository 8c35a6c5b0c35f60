//! Reverse-mode automatic differentiation over a dynamic tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the node vector is already a topological order and the
//! backward sweep is a single reverse scan that visits every node once.
//! Parameters are borrowed from a [`ParamStore`], never copied.

mod conv;
mod lstm;
mod ops;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) use conv::ConvCache;
pub(crate) use lstm::LstmCache;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinKind {
    Add,
    Mul,
}

/// Recorded operation plus whatever the backward rule needs.
pub(crate) enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Broadcast {
        a: Var,
        b: Var,
        kind: BinKind,
        map: Vec<usize>,
    },
    Affine {
        x: Var,
        scale: T,
    },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat {
        inputs: Vec<Var>,
        widths: Vec<usize>,
    },
    Slice {
        x: Var,
        start: usize,
        width: usize,
    },
    Reshape(Var),
    MaskedFill {
        x: Var,
        mask: Vec<bool>,
    },
    Softmax(Var),
    LogSoftmax {
        x: Var,
        mask: Vec<bool>,
    },
    MaxLast {
        x: Var,
        argmax: Vec<usize>,
    },
    Bmm {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    GatherLast {
        x: Var,
        index: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    MulConst {
        x: Var,
        factor: Vec<T>,
    },
    Lstm(Box<LstmCache<T>>),
    ConvMaxPool(Box<ConvCache<T>>),
}

impl<T> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Linear { .. } => "linear",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Broadcast { .. } => "broadcast",
            Op::Affine { .. } => "affine",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::MaskedFill { .. } => "masked_fill",
            Op::Softmax(_) => "masked_softmax",
            Op::LogSoftmax { .. } => "masked_log_softmax",
            Op::MaxLast { .. } => "max",
            Op::Bmm { .. } => "bmm",
            Op::Embedding { .. } => "embedding",
            Op::GatherLast { .. } => "gather",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MulConst { .. } => "mul_const",
            Op::Lstm(_) => "lstm",
            Op::ConvMaxPool(_) => "conv1d_maxpool",
        }
    }
}

enum Value<T> {
    Owned(Tensor<T>),
    Param(ParamId),
}

pub(crate) struct Node<T> {
    value: Value<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Tape of one forward computation.
pub struct Graph<'p, T: Scalar> {
    store: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, Var>,
    check_finite: bool,
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Non-finite checking is on in debug builds and off otherwise; see
    /// [`Graph::set_check_finite`].
    pub fn new(store: &'p ParamStore<T>) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            check_finite: cfg!(debug_assertions),
        }
    }

    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Untracked input.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Tracked leaf not backed by a parameter; its gradient is available
    /// through [`Gradients::node`].
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node so
    /// gradients from every use accumulate in one place.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let needs_grad = !self.store.get(id).frozen;
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            needs_grad,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let needs_grad = self.parents(&op).iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn parents(&self, op: &Op<T>) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Bmm { a, b, .. } | Op::Broadcast { a, b, .. } => vec![*a, *b],
            Op::Linear { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            Op::Affine { x, .. }
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::Slice { x, .. }
            | Op::Reshape(x)
            | Op::MaskedFill { x, .. }
            | Op::Softmax(x)
            | Op::LogSoftmax { x, .. }
            | Op::MaxLast { x, .. }
            | Op::GatherLast { x, .. }
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::MulConst { x, .. } => vec![*x],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Embedding { table, .. } => vec![*table],
            Op::Lstm(c) => vec![c.x, c.w_ih, c.w_hh, c.b],
            Op::ConvMaxPool(c) => vec![c.x, c.w, c.b],
        }
    }

    /// Runs the backward sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = self.value(output);
        if out.numel() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("output must be scalar, got shape {:?}", out.shape()),
            ));
        }
        let mut grads = Grads {
            slots: (0..self.nodes.len()).map(|_| None).collect(),
            needs: self.nodes.iter().map(|n| n.needs_grad).collect(),
        };
        if self.nodes[output.0].needs_grad {
            grads.slots[output.0] = Some(vec![T::one()]);
        }
        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads.slots[i].take() else {
                continue;
            };
            self.backward_node(Var(i), &dy, &mut grads);
        }
        let mut params: Vec<Option<Tensor<T>>> = vec![None; self.store.len()];
        for (&id, &v) in &self.param_nodes {
            if let Some(g) = grads.slots[v.0].take() {
                let shape = self.store.value(id).shape().to_vec();
                params[id.index()] = Some(Tensor::new(shape, g)?);
            }
        }
        Ok(Gradients {
            nodes: grads.slots,
            params,
        })
    }

    fn backward_node(&self, v: Var, dy: &[T], g: &mut Grads<T>) {
        let node = &self.nodes[v.0];
        let y = match &node.value {
            Value::Owned(t) => t,
            Value::Param(_) => unreachable!("parameters are leaves"),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Lstm(cache) => lstm::backward(self, cache, y, dy, g),
            Op::ConvMaxPool(cache) => conv::backward(self, cache, dy, g),
            op => ops::backward(self, op, y, dy, g),
        }
    }
}

/// Per-node gradient accumulators used during the sweep.
pub(crate) struct Grads<T> {
    slots: Vec<Option<Vec<T>>>,
    needs: Vec<bool>,
}

impl<T: Scalar> Grads<T> {
    /// Accumulator for `v`, allocated on first use; `None` when `v` does not
    /// participate in differentiation.
    pub(crate) fn slot(&mut self, v: Var, len: usize) -> Option<&mut [T]> {
        if !self.needs[v.0] {
            return None;
        }
        Some(
            self.slots[v.0]
                .get_or_insert_with(|| vec![T::zero(); len])
                .as_mut_slice(),
        )
    }

    pub(crate) fn needs(&self, v: Var) -> bool {
        self.needs[v.0]
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    nodes: Vec<Option<Vec<T>>>,
    params: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a parameter, `None` if it did not influence
    /// the output.
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(id.index()).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to a leaf created by [`Graph::input`].
    pub fn node(&self, v: Var) -> Option<&[T]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn into_params(self) -> Vec<Option<Tensor<T>>> {
        self.params
    }
}
