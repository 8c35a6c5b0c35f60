//! The BiDAF reader with a configurable model-encoder stack.

pub mod attention;
pub mod embedding;
pub mod encoder;
pub mod layers;
pub mod output;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::batch::Batch;
use crate::error::Result;
use crate::param::ParamStore;
use crate::scalar::Scalar;

use attention::AttentionFlow;
use embedding::{Embedder, EmbeddingConfig, TokenInput};
use encoder::{EncoderConfig, EncoderVariant, ModelEncoder};
use layers::{maybe_dropout, Dropout};
use output::{decode_best_span, span_loss, OutputLayer, SpanPrediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding: EmbeddingConfig,
    pub variant: EncoderVariant,
    pub gate_bias: f64,
    pub zero_init_blocks: bool,
    pub ensemble_k: usize,
    pub max_answer_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding: EmbeddingConfig::default(),
            variant: EncoderVariant::Baseline,
            gate_bias: -1.0,
            zero_init_blocks: false,
            ensemble_k: 0,
            max_answer_len: output::DEFAULT_MAX_ANSWER_LEN,
        }
    }
}

impl ModelConfig {
    pub fn hidden(&self) -> usize {
        self.embedding.hidden
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            variant: self.variant.clone(),
            hidden: self.embedding.hidden,
            gate_bias: self.gate_bias,
            zero_init_blocks: self.zero_init_blocks,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BiDaf {
    pub config: ModelConfig,
    pub embedder: Embedder,
    pub attention: AttentionFlow,
    pub encoder: ModelEncoder,
    pub output: OutputLayer,
}

/// Intermediate and final nodes of one forward pass.
pub struct Forward {
    pub context: Var,
    pub question: Var,
    pub attended: Var,
    pub m: Var,
    pub layers: Vec<Var>,
    pub log_start: Var,
    pub log_end: Var,
}

impl BiDaf {
    /// Registers every parameter in `store`. `word_vectors` is row-aligned with
    /// the word vocabulary.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        config: &ModelConfig,
        vocab_size: usize,
        word_vectors: &[f64],
        char_vocab_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let h = config.hidden();
        if config.ensemble_k > config.variant.layer_outputs() {
            return Err(crate::error::Error::Config(format!(
                "ensemble_k {} exceeds the {} layer outputs of {}",
                config.ensemble_k,
                config.variant.layer_outputs(),
                config.variant
            )));
        }
        let embedder = Embedder::new(store, &config.embedding, vocab_size, word_vectors, char_vocab_size, seed)?;
        let attention = AttentionFlow::new(store, 2 * h, seed)?;
        let encoder = ModelEncoder::new(store, &config.encoder(), seed)?;
        let output = OutputLayer::new(store, h, config.ensemble_k, seed)?;
        Ok(BiDaf {
            config: config.clone(),
            embedder,
            attention,
            encoder,
            output,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, batch: &Batch, dropout: Option<&Dropout>) -> Result<Forward> {
        let c_len = batch.context_lengths();
        let q_len = batch.question_lengths();
        let context = self.embedder.encode(
            g,
            &TokenInput {
                words: &batch.context_words,
                chars: &batch.context_chars,
                batch: batch.size,
                steps: batch.n,
                lengths: &c_len,
            },
            dropout,
            "embed.context_input",
        )?;
        let question = self.embedder.encode(
            g,
            &TokenInput {
                words: &batch.question_words,
                chars: &batch.question_chars,
                batch: batch.size,
                steps: batch.m,
                lengths: &q_len,
            },
            dropout,
            "embed.question_input",
        )?;
        let att = self
            .attention
            .apply(g, context, question, &batch.context_mask, &batch.question_mask)?;
        let attended = maybe_dropout(g, att.g, dropout, "model.entry")?;
        let stack = self.encoder.run_stack(g, attended, &c_len, dropout)?;
        let (log_start, log_end) = self.output.span_logits(
            g,
            att.g,
            stack.m,
            &stack.layers,
            &batch.context_mask,
            &c_len,
            dropout,
        )?;
        Ok(Forward {
            context,
            question,
            attended: att.g,
            m: stack.m,
            layers: stack.layers,
            log_start,
            log_end,
        })
    }

    /// Forward pass plus span loss; returns `(forward, loss)`.
    pub fn loss<T: Scalar>(&self, g: &mut Graph<'_, T>, batch: &Batch, dropout: Option<&Dropout>) -> Result<(Forward, Var)> {
        let fwd = self.forward(g, batch, dropout)?;
        let loss = span_loss(g, fwd.log_start, fwd.log_end, &batch.starts, &batch.ends)?;
        Ok((fwd, loss))
    }

    /// Deterministic decode of every row of `batch`.
    pub fn predict<T: Scalar>(&self, store: &ParamStore<T>, batch: &Batch) -> Result<Vec<SpanPrediction>> {
        let mut g = Graph::new(store);
        g.set_check_finite(false);
        let fwd = self.forward(&mut g, batch, None)?;
        let n = batch.n;
        let probs = |v: Var| -> Vec<f64> { g.value(v).data().iter().map(|x| x.as_f64().exp()).collect() };
        let (ps, pe) = (probs(fwd.log_start), probs(fwd.log_end));
        Ok((0..batch.size)
            .map(|r| decode_best_span(&ps[r * n..(r + 1) * n], &pe[r * n..(r + 1) * n], self.config.max_answer_len))
            .collect())
    }
}
