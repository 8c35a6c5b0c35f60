//! Parameterised building blocks shared by the model modules.

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::param::{Init, ParamId, ParamStore};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// `x · W + b` on the trailing axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        init: Init,
        bias: Option<Init>,
        seed: u64,
    ) -> Result<Self> {
        let w = store.add(&format!("{name}.w"), &[d_in, d_out], init, seed)?;
        let b = match bias {
            Some(init) => Some(store.add(&format!("{name}.b"), &[d_out], init, seed)?),
            None => None,
        };
        Ok(Linear { w, b, d_in, d_out })
    }

    pub fn apply<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = self.b.map(|b| g.param(b));
        g.linear(x, w, b)
    }
}

/// One LSTM direction.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
}

impl LstmParams {
    fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_in: usize, h: usize, seed: u64) -> Result<Self> {
        let k = 1.0 / (h as f64).sqrt();
        Ok(LstmParams {
            w_ih: store.add(&format!("{name}.w_ih"), &[d_in, 4 * h], Init::Uniform(-k, k), seed)?,
            w_hh: store.add(&format!("{name}.w_hh"), &[h, 4 * h], Init::Uniform(-k, k), seed)?,
            b: store.add(&format!("{name}.b"), &[4 * h], Init::Uniform(-k, k), seed)?,
        })
    }
}

/// Bidirectional LSTM: `[B, T, d_in] -> [B, T, 2h]`, forward half first.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fw: LstmParams,
    pub bw: LstmParams,
    pub d_in: usize,
    pub h: usize,
}

impl BiLstm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_in: usize, h: usize, seed: u64) -> Result<Self> {
        Ok(BiLstm {
            fw: LstmParams::new(store, &format!("{name}.fw"), d_in, h, seed)?,
            bw: LstmParams::new(store, &format!("{name}.bw"), d_in, h, seed)?,
            d_in,
            h,
        })
    }

    pub fn apply<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, lengths: &[usize]) -> Result<Var> {
        let mut halves = Vec::with_capacity(2);
        for (p, reverse) in [(&self.fw, false), (&self.bw, true)] {
            let (w_ih, w_hh, b) = (g.param(p.w_ih), g.param(p.w_hh), g.param(p.b));
            halves.push(g.lstm(x, lengths, w_ih, w_hh, b, reverse)?);
        }
        g.concat_last(&halves)
    }
}

/// Inverted dropout with masks keyed by `(seed, step, site)`, so a site's
/// mask does not depend on what else the model computes.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
    pub step: u64,
}

impl Dropout {
    pub fn apply<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, site: &str) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let scale = T::lit(1.0 / keep);
        let mut rng = RngStream::for_name(
            self.seed ^ self.step.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            &format!("dropout/{site}"),
        );
        let n = g.value(x).numel();
        let factor = (0..n)
            .map(|_| if rng.bernoulli(keep) { scale } else { T::zero() })
            .collect();
        g.mul_const(x, factor)
    }
}

/// Applies `dropout` when present.
pub fn maybe_dropout<T: Scalar>(g: &mut Graph<'_, T>, x: Var, dropout: Option<&Dropout>, site: &str) -> Result<Var> {
    match dropout {
        Some(d) => d.apply(g, x, site),
        None => Ok(x),
    }
}

/// Identity matrix values for a `[rows, cols]` parameter whose last
/// `cols` rows form the identity and the rest are zero.
pub fn trailing_identity(rows: usize, cols: usize) -> Vec<f64> {
    let mut v = vec![0.0; rows * cols];
    let offset = rows - cols;
    for i in 0..cols {
        v[(offset + i) * cols + i] = 1.0;
    }
    v
}
