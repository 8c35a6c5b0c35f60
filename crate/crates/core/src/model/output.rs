//! Start/end distributions, output ensembles, decoding and the span loss.

use serde::Serialize;

use crate::autodiff::{Graph, Var};
use crate::data::tokenize::{detokenize, Token};
use crate::error::{Error, Result};
use crate::model::layers::{maybe_dropout, trailing_identity, BiLstm, Dropout, Linear};
use crate::param::{Init, ParamStore};
use crate::scalar::Scalar;

pub const DEFAULT_MAX_ANSWER_LEN: usize = 15;

#[derive(Debug, Clone)]
pub struct OutputLayer {
    pub start: Linear,
    pub end_lstm: BiLstm,
    pub end: Linear,
    /// Projection of the last `k` stack outputs back to 2h.
    pub ensemble: Option<(usize, Linear)>,
}

impl OutputLayer {
    /// `ensemble_k = 0` disables the ensemble path.
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, h: usize, ensemble_k: usize, seed: u64) -> Result<Self> {
        let g_width = 8 * h;
        let m_width = 2 * h;
        let ensemble = if ensemble_k > 0 {
            let rows = m_width * ensemble_k;
            let proj = Linear::new(
                store,
                "output.ensemble",
                rows,
                m_width,
                Init::Values(trailing_identity(rows, m_width)),
                Some(Init::Zeros),
                seed,
            )?;
            Some((ensemble_k, proj))
        } else {
            None
        };
        Ok(OutputLayer {
            // no bias: a shift shared by every position cancels in the softmax
            start: Linear::new(store, "output.start", g_width + m_width, 1, Init::Xavier, None, seed)?,
            end_lstm: BiLstm::new(store, "output.end_lstm", m_width, h, seed)?,
            end: Linear::new(store, "output.end", g_width + m_width, 1, Init::Xavier, None, seed)?,
            ensemble,
        })
    }

    /// Log-probabilities of start and end, each `[B, N]`.
    pub fn span_logits<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        attended: Var,
        m: Var,
        layer_outputs: &[Var],
        mask: &[bool],
        lengths: &[usize],
        dropout: Option<&Dropout>,
    ) -> Result<(Var, Var)> {
        let shape = g.shape(m).to_vec();
        let (batch, n) = (shape[0], shape[1]);
        let gm = g.concat_last(&[attended, m])?;
        let start = self.start.apply(g, gm)?;
        let start = g.reshape(start, &[batch, n])?;
        let log_start = g.masked_log_softmax(start, mask)?;

        let end_input = match &self.ensemble {
            Some((k, proj)) => ensemble_inputs(g, layer_outputs, *k, proj)?,
            None => m,
        };
        let end_input = maybe_dropout(g, end_input, dropout, "output.end_lstm")?;
        let m2 = self.end_lstm.apply(g, end_input, lengths)?;
        let gm2 = g.concat_last(&[attended, m2])?;
        let end = self.end.apply(g, gm2)?;
        let end = g.reshape(end, &[batch, n])?;
        let log_end = g.masked_log_softmax(end, mask)?;
        Ok((log_start, log_end))
    }
}

/// Concatenates the last `k` layer outputs and projects them to 2h.
pub fn ensemble_inputs<T: Scalar>(g: &mut Graph<'_, T>, layer_outputs: &[Var], k: usize, proj: &Linear) -> Result<Var> {
    if k == 0 || k > layer_outputs.len() {
        return Err(Error::Config(format!(
            "ensemble over {k} layers requested but the stack has {}",
            layer_outputs.len()
        )));
    }
    let last = &layer_outputs[layer_outputs.len() - k..];
    let joined = if k == 1 { last[0] } else { g.concat_last(last)? };
    proj.apply(g, joined)
}

/// Mean negative log-likelihood of the gold start and end.
pub fn span_loss<T: Scalar>(g: &mut Graph<'_, T>, log_start: Var, log_end: Var, starts: &[usize], ends: &[usize]) -> Result<Var> {
    let s = g.gather_last(log_start, starts)?;
    let e = g.gather_last(log_end, ends)?;
    let floor = T::lit(-1e29);
    let hits_mask = g.value(s).data().iter().chain(g.value(e).data()).any(|&v| v <= floor);
    if hits_mask {
        return Err(Error::invalid("span_loss", "gold position is masked"));
    }
    let both = g.add(s, e)?;
    let mean = g.mean(both)?;
    g.affine(mean, -1.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpanPrediction {
    pub start: usize,
    pub end: usize,
    pub prob: f64,
    pub is_no_answer: bool,
}

/// Most probable span with `end − start ≤ max_len`, or the sentinel pair.
/// Ties go to the smallest start, then the smallest end.
pub fn decode_best_span(p_start: &[f64], p_end: &[f64], max_len: usize) -> SpanPrediction {
    let n = p_start.len().min(p_end.len());
    let mut best = (0, 0, p_start[0] * p_end[0]);
    for i in 1..n {
        for j in i..n.min(i + max_len + 1) {
            let p = p_start[i] * p_end[j];
            if p > best.2 {
                best = (i, j, p);
            }
        }
    }
    SpanPrediction {
        start: best.0,
        end: best.1,
        prob: best.2,
        is_no_answer: best.0 == 0 && best.1 == 0,
    }
}

/// Raw answer text for a span in batch coordinates (sentinel at 0).
pub fn detokenize_answer(context: &str, tokens: &[Token], span: &SpanPrediction) -> String {
    if span.is_no_answer || span.start == 0 {
        return String::new();
    }
    detokenize(context, tokens, span.start - 1, span.end - 1)
}
