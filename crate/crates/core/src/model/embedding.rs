//! Word lookup, character CNN, highway fusion and the contextual BiLSTM.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::vocab::{CHAR_PAD, MAX_WORD_LEN, NULL, OOV, PAD};
use crate::error::{Error, Result};
use crate::model::layers::{maybe_dropout, BiLstm, Dropout, Linear};
use crate::param::{Init, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub word_dim: usize,
    pub use_char: bool,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_kernel: usize,
    pub hidden: usize,
    pub highway_layers: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            word_dim: 50,
            use_char: false,
            char_dim: 16,
            char_filters: 64,
            char_kernel: 5,
            hidden: 32,
            highway_layers: 2,
        }
    }
}

impl EmbeddingConfig {
    pub fn fused_width(&self) -> usize {
        self.word_dim + if self.use_char { self.char_filters } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.word_dim, self.hidden];
        let char_dims = [self.char_dim, self.char_filters, self.char_kernel];
        if dims.contains(&0) || (self.use_char && char_dims.contains(&0)) {
            return Err(Error::Config("embedding dimensions must be positive".into()));
        }
        if self.use_char && self.char_kernel > MAX_WORD_LEN {
            return Err(Error::Config(format!(
                "char kernel {} is wider than the {MAX_WORD_LEN}-character word slot",
                self.char_kernel
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CharCnn {
    pub table: ParamId,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
    pub kernel: usize,
}

#[derive(Debug, Clone)]
pub struct HighwayLayer {
    pub transform: Linear,
    pub gate: Linear,
}

#[derive(Debug, Clone)]
pub struct Embedder {
    pub config: EmbeddingConfig,
    pub word_table: ParamId,
    pub chars: Option<CharCnn>,
    pub highway: Vec<HighwayLayer>,
    pub context: BiLstm,
}

/// Token ids for one side (context or question) of a batch.
pub struct TokenInput<'a> {
    pub words: &'a [usize],
    /// `words.len() * MAX_WORD_LEN` character ids.
    pub chars: &'a [usize],
    pub batch: usize,
    pub steps: usize,
    pub lengths: &'a [usize],
}

impl Embedder {
    /// `word_vectors` holds `vocab_size * word_dim` initial values. Only the
    /// OOV and NULL rows are updated during training.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        config: &EmbeddingConfig,
        vocab_size: usize,
        word_vectors: &[f64],
        char_vocab_size: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.word_dim;
        if word_vectors.len() != vocab_size * d || vocab_size <= NULL {
            return Err(Error::Config(format!(
                "word vectors hold {} values, expected {vocab_size} x {d}",
                word_vectors.len()
            )));
        }
        let mut values = word_vectors.to_vec();
        values[PAD * d..(PAD + 1) * d].fill(0.0);
        values[NULL * d..(NULL + 1) * d].fill(0.0);
        let word_table = store.add("embed.word", &[vocab_size, d], Init::Values(values), seed)?;
        store.get_mut(word_table).trainable_rows = Some(vec![OOV, NULL]);

        let chars = if config.use_char {
            let table = store.add(
                "embed.char",
                &[char_vocab_size, config.char_dim],
                Init::Uniform(-0.5, 0.5),
                seed,
            )?;
            let p = store.get_mut(table);
            let width = config.char_dim;
            p.value.data_mut()[CHAR_PAD * width..(CHAR_PAD + 1) * width].fill(T::zero());
            p.trainable_rows = Some((0..char_vocab_size).filter(|&r| r != CHAR_PAD).collect());
            Some(CharCnn {
                table,
                conv_w: store.add(
                    "embed.char_conv.w",
                    &[config.char_kernel * config.char_dim, config.char_filters],
                    Init::Xavier,
                    seed,
                )?,
                conv_b: store.add("embed.char_conv.b", &[config.char_filters], Init::Zeros, seed)?,
                kernel: config.char_kernel,
            })
        } else {
            None
        };

        let width = config.fused_width();
        let mut highway = Vec::with_capacity(config.highway_layers);
        for l in 0..config.highway_layers {
            highway.push(HighwayLayer {
                transform: Linear::new(store, &format!("embed.highway{l}.transform"), width, width, Init::Xavier, Some(Init::Zeros), seed)?,
                gate: Linear::new(store, &format!("embed.highway{l}.gate"), width, width, Init::Xavier, Some(Init::Zeros), seed)?,
            });
        }
        let context = BiLstm::new(store, "embed.context", width, config.hidden, seed)?;
        Ok(Embedder {
            config: config.clone(),
            word_table,
            chars,
            highway,
            context,
        })
    }

    /// Fused, highway-transformed embeddings `[B, T, fused_width]`.
    pub fn embed<T: Scalar>(&self, g: &mut Graph<'_, T>, input: &TokenInput<'_>) -> Result<Var> {
        let lead = [input.batch, input.steps];
        let table = g.param(self.word_table);
        let mut x = embed_words(g, table, input.words, &lead)?;
        if let Some(cnn) = &self.chars {
            let c = embed_chars(g, cnn, input.chars, &lead)?;
            x = g.concat_last(&[x, c])?;
        }
        highway_fuse(g, x, &self.highway)
    }

    /// Embedding followed by the contextual BiLSTM: `[B, T, 2h]`.
    pub fn encode<T: Scalar>(&self, g: &mut Graph<'_, T>, input: &TokenInput<'_>, dropout: Option<&Dropout>, site: &str) -> Result<Var> {
        let x = self.embed(g, input)?;
        let x = maybe_dropout(g, x, dropout, site)?;
        contextual_encode(g, &self.context, x, input.lengths)
    }
}

pub fn embed_words<T: Scalar>(g: &mut Graph<'_, T>, table: Var, ids: &[usize], lead: &[usize]) -> Result<Var> {
    g.embedding(table, ids, lead)
}

/// Character CNN per token: `[B, T, MAX_WORD_LEN]` ids to `[B, T, f]`.
pub fn embed_chars<T: Scalar>(g: &mut Graph<'_, T>, cnn: &CharCnn, char_ids: &[usize], lead: &[usize]) -> Result<Var> {
    let tokens: usize = lead.iter().product();
    let table = g.param(cnn.table);
    let e = g.embedding(table, char_ids, &[tokens, MAX_WORD_LEN])?;
    let (w, b) = (g.param(cnn.conv_w), g.param(cnn.conv_b));
    let pooled = g.conv1d_maxpool(e, w, b, cnn.kernel)?;
    let f = g.shape(pooled)[1];
    let mut shape = lead.to_vec();
    shape.push(f);
    g.reshape(pooled, &shape)
}

/// `y = g ∘ relu(W_h x + b_h) + (1 − g) ∘ x` with `g = σ(W_g x + b_g)`, per
/// layer.
pub fn highway_fuse<T: Scalar>(g: &mut Graph<'_, T>, mut x: Var, layers: &[HighwayLayer]) -> Result<Var> {
    for layer in layers {
        let pre = layer.transform.apply(g, x)?;
        let h = g.relu(pre)?;
        let gate_pre = layer.gate.apply(g, x)?;
        let gate = g.sigmoid(gate_pre)?;
        let carry = g.one_minus(gate)?;
        let a = g.mul(gate, h)?;
        let b = g.mul(carry, x)?;
        x = g.add(a, b)?;
    }
    Ok(x)
}

pub fn contextual_encode<T: Scalar>(g: &mut Graph<'_, T>, lstm: &BiLstm, x: Var, lengths: &[usize]) -> Result<Var> {
    lstm.apply(g, x, lengths)
}
