//! Model-encoder stacks above the attention output: plain, bypass
//! (residual), highway and DenseNet wiring.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::layers::{maybe_dropout, BiLstm, Dropout, Linear};
use crate::param::{Init, ParamStore};
use crate::scalar::Scalar;

pub const DEFAULT_COMPRESSION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderVariant {
    Baseline,
    Bypass { depth: usize },
    Highway { depth: usize },
    DenseNet {
        plan: Vec<usize>,
        /// Channels added per dense layer; `None` means 2h.
        growth: Option<usize>,
        compression: f64,
    },
}

impl EncoderVariant {
    /// Number of stacked layers whose outputs can feed an output ensemble.
    pub fn layer_outputs(&self) -> usize {
        match self {
            EncoderVariant::Baseline | EncoderVariant::DenseNet { .. } => 1,
            EncoderVariant::Bypass { depth } | EncoderVariant::Highway { depth } => *depth,
        }
    }
}

impl FromStr for EncoderVariant {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        let bad = |msg: &str| Error::BadVariant {
            input: input.to_string(),
            msg: msg.to_string(),
        };
        let s = input.trim().to_ascii_lowercase();
        if s == "baseline" {
            return Ok(EncoderVariant::Baseline);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| bad("expected baseline, bypass:<L>, highway:<L> or densenet:<s1>+<s2>..."))?;
        let count = |text: &str| -> Result<usize> {
            match text.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(bad(&format!("`{text}` is not a positive integer"))),
            }
        };
        match kind.trim() {
            "bypass" => Ok(EncoderVariant::Bypass { depth: count(arg)? }),
            "highway" => Ok(EncoderVariant::Highway { depth: count(arg)? }),
            "densenet" => {
                let plan = arg.split('+').map(count).collect::<Result<Vec<_>>>()?;
                Ok(EncoderVariant::DenseNet {
                    plan,
                    growth: None,
                    compression: DEFAULT_COMPRESSION,
                })
            }
            other => Err(bad(&format!("unknown variant kind `{other}`"))),
        }
    }
}

impl fmt::Display for EncoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderVariant::Baseline => write!(f, "baseline"),
            EncoderVariant::Bypass { depth } => write!(f, "bypass:{depth}"),
            EncoderVariant::Highway { depth } => write!(f, "highway:{depth}"),
            EncoderVariant::DenseNet { plan, .. } => {
                let parts: Vec<String> = plan.iter().map(usize::to_string).collect();
                write!(f, "densenet:{}", parts.join("+"))
            }
        }
    }
}

impl Serialize for EncoderVariant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EncoderVariant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    /// LSTM hidden size per direction; stack width is 2h.
    pub hidden: usize,
    /// Initial highway gate bias.
    pub gate_bias: f64,
    /// Zero-initialise block output projections.
    pub zero_init_blocks: bool,
}

/// BiLSTM block with an optional input projection to 2h and an output
/// projection to `d_out`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub input: Option<Linear>,
    pub lstm: BiLstm,
    pub output: Linear,
}

impl EncoderBlock {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_in: usize, h: usize, d_out: usize, zero_out: bool, seed: u64) -> Result<Self> {
        let input = if d_in != 2 * h {
            Some(Linear::new(store, &format!("{name}.input"), d_in, 2 * h, Init::Xavier, Some(Init::Zeros), seed)?)
        } else {
            None
        };
        let out_init = if zero_out { Init::Zeros } else { Init::Xavier };
        Ok(EncoderBlock {
            input,
            lstm: BiLstm::new(store, &format!("{name}.lstm"), 2 * h, h, seed)?,
            output: Linear::new(store, &format!("{name}.output"), 2 * h, d_out, out_init, Some(Init::Zeros), seed)?,
        })
    }

    pub fn apply<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, lengths: &[usize]) -> Result<Var> {
        let x = match &self.input {
            Some(p) => p.apply(g, x)?,
            None => x,
        };
        let y = self.lstm.apply(g, x, lengths)?;
        self.output.apply(g, y)
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub bottleneck: Linear,
    pub block: EncoderBlock,
}

#[derive(Debug, Clone)]
pub struct DenseBlock {
    pub layers: Vec<DenseLayer>,
    pub transition: Linear,
}

#[derive(Debug, Clone)]
pub enum StackLayers {
    Baseline,
    Bypass(Vec<EncoderBlock>),
    Highway(Vec<(EncoderBlock, Linear)>),
    DenseNet(Vec<DenseBlock>),
}

/// Channel widths through a DenseNet plan: for each block, the width after
/// the block input and after every dense layer, then the transition width.
pub fn densenet_widths(plan: &[usize], width: usize, growth: usize, compression: f64) -> Result<Vec<(Vec<usize>, usize)>> {
    if plan.is_empty() || plan.contains(&0) || growth == 0 {
        return Err(Error::Config("densenet plan and growth must be positive".into()));
    }
    if !(compression > 0.0 && compression <= 1.0) {
        return Err(Error::Config(format!("compression {compression} must be in (0, 1]")));
    }
    let mut out = Vec::with_capacity(plan.len());
    let mut w = width;
    for (i, &size) in plan.iter().enumerate() {
        let stages: Vec<usize> = (0..=size).map(|k| w + k * growth).collect();
        let full = *stages.last().unwrap();
        let next = if i + 1 == plan.len() {
            width
        } else {
            (compression * full as f64).ceil() as usize
        };
        if next == 0 {
            return Err(Error::Config("transition produces zero channels".into()));
        }
        out.push((stages, next));
        w = next;
    }
    Ok(out)
}

/// Entry BiLSTM (8h to 2h) plus the configured stack.
#[derive(Debug, Clone)]
pub struct ModelEncoder {
    pub config: EncoderConfig,
    pub entry: BiLstm,
    pub layers: StackLayers,
}

/// Stack result: final output and per-layer outputs (for ensembles).
pub struct StackOutput {
    pub m: Var,
    pub layers: Vec<Var>,
}

impl ModelEncoder {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, config: &EncoderConfig, seed: u64) -> Result<Self> {
        let h = config.hidden;
        if h == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        let width = 2 * h;
        let zero = config.zero_init_blocks;
        let entry = BiLstm::new(store, "model.entry", 8 * h, h, seed)?;
        let layers = match &config.variant {
            EncoderVariant::Baseline => StackLayers::Baseline,
            EncoderVariant::Bypass { depth } => StackLayers::Bypass(
                (0..*depth)
                    .map(|l| EncoderBlock::new(store, &format!("model.layer{l}"), width, h, width, zero, seed))
                    .collect::<Result<_>>()?,
            ),
            EncoderVariant::Highway { depth } => StackLayers::Highway(
                (0..*depth)
                    .map(|l| {
                        let block = EncoderBlock::new(store, &format!("model.layer{l}"), width, h, width, zero, seed)?;
                        let gate = Linear::new(
                            store,
                            &format!("model.layer{l}.gate"),
                            width,
                            width,
                            Init::Xavier,
                            Some(Init::Constant(config.gate_bias)),
                            seed,
                        )?;
                        Ok((block, gate))
                    })
                    .collect::<Result<_>>()?,
            ),
            EncoderVariant::DenseNet {
                plan,
                growth,
                compression,
            } => {
                let growth = growth.unwrap_or(width);
                let widths = densenet_widths(plan, width, growth, *compression)?;
                let mut blocks = Vec::with_capacity(plan.len());
                for (bi, (stages, next)) in widths.iter().enumerate() {
                    let mut layers = Vec::with_capacity(stages.len() - 1);
                    for (k, &w_in) in stages[..stages.len() - 1].iter().enumerate() {
                        let name = format!("model.dense{bi}.layer{k}");
                        layers.push(DenseLayer {
                            bottleneck: Linear::new(store, &format!("{name}.bottleneck"), w_in, width, Init::Xavier, Some(Init::Zeros), seed)?,
                            block: EncoderBlock::new(store, &name, width, h, growth, zero, seed)?,
                        });
                    }
                    let transition = Linear::new(
                        store,
                        &format!("model.dense{bi}.transition"),
                        *stages.last().unwrap(),
                        *next,
                        Init::Xavier,
                        Some(Init::Zeros),
                        seed,
                    )?;
                    blocks.push(DenseBlock { layers, transition });
                }
                StackLayers::DenseNet(blocks)
            }
        };
        Ok(ModelEncoder {
            config: config.clone(),
            entry,
            layers,
        })
    }

    /// M₀: one BiLSTM pass over G.
    pub fn encode_entry<T: Scalar>(&self, g: &mut Graph<'_, T>, attended: Var, lengths: &[usize]) -> Result<Var> {
        self.entry.apply(g, attended, lengths)
    }

    /// Entry pass followed by the stack.
    pub fn run_stack<T: Scalar>(&self, g: &mut Graph<'_, T>, attended: Var, lengths: &[usize], dropout: Option<&Dropout>) -> Result<StackOutput> {
        let m0 = self.encode_entry(g, attended, lengths)?;
        self.run_layers(g, m0, lengths, dropout)
    }

    /// The stack alone, applied to a given M₀.
    pub fn run_layers<T: Scalar>(&self, g: &mut Graph<'_, T>, m0: Var, lengths: &[usize], dropout: Option<&Dropout>) -> Result<StackOutput> {
        match &self.layers {
            StackLayers::Baseline => Ok(StackOutput { m: m0, layers: vec![m0] }),
            StackLayers::Bypass(blocks) => encode_bypass(g, m0, blocks, lengths, dropout),
            StackLayers::Highway(layers) => encode_highway(g, m0, layers, lengths, dropout),
            StackLayers::DenseNet(blocks) => {
                let m = encode_densenet(g, m0, blocks, lengths, dropout)?;
                Ok(StackOutput { m, layers: vec![m] })
            }
        }
    }
}

/// `M_ℓ = F_ℓ(M_{ℓ−1}) + M_{ℓ−1}`.
pub fn encode_bypass<T: Scalar>(g: &mut Graph<'_, T>, m0: Var, blocks: &[EncoderBlock], lengths: &[usize], dropout: Option<&Dropout>) -> Result<StackOutput> {
    let mut x = m0;
    let mut outputs = Vec::with_capacity(blocks.len());
    for (l, block) in blocks.iter().enumerate() {
        let inp = maybe_dropout(g, x, dropout, &format!("model.layer{l}"))?;
        let f = block.apply(g, inp, lengths)?;
        x = g.add(f, x)?;
        outputs.push(x);
    }
    Ok(StackOutput { m: x, layers: outputs })
}

/// `y = T(x) ∘ H(x) + (1 − T(x)) ∘ x` with gate `T(x) = σ(W_g x + b_g)`.
pub fn encode_highway<T: Scalar>(g: &mut Graph<'_, T>, m0: Var, layers: &[(EncoderBlock, Linear)], lengths: &[usize], dropout: Option<&Dropout>) -> Result<StackOutput> {
    let mut x = m0;
    let mut outputs = Vec::with_capacity(layers.len());
    for (l, (block, gate)) in layers.iter().enumerate() {
        let inp = maybe_dropout(g, x, dropout, &format!("model.layer{l}"))?;
        let h = block.apply(g, inp, lengths)?;
        let pre = gate.apply(g, x)?;
        let t = g.sigmoid(pre)?;
        let carry = g.one_minus(t)?;
        let a = g.mul(t, h)?;
        let b = g.mul(carry, x)?;
        x = g.add(a, b)?;
        outputs.push(x);
    }
    Ok(StackOutput { m: x, layers: outputs })
}

pub fn encode_densenet<T: Scalar>(g: &mut Graph<'_, T>, m0: Var, blocks: &[DenseBlock], lengths: &[usize], dropout: Option<&Dropout>) -> Result<Var> {
    let mut x = m0;
    for (bi, block) in blocks.iter().enumerate() {
        let mut features = vec![x];
        for (k, layer) in block.layers.iter().enumerate() {
            let joined = if features.len() == 1 { features[0] } else { g.concat_last(&features)? };
            let joined = maybe_dropout(g, joined, dropout, &format!("model.dense{bi}.layer{k}"))?;
            let narrowed = layer.bottleneck.apply(g, joined)?;
            features.push(layer.block.apply(g, narrowed, lengths)?);
        }
        let all = g.concat_last(&features)?;
        x = block.transition.apply(g, all)?;
    }
    Ok(x)
}

/// Parameter count of a bypass or highway stack with `depth` layers at hidden
/// size `h`, excluding the entry pass.
pub fn stack_param_count(variant: &EncoderVariant, h: usize) -> Option<usize> {
    let w = 2 * h;
    let lstm = 2 * (w * 4 * h + h * 4 * h + 4 * h);
    let block = lstm + w * w + w;
    match variant {
        EncoderVariant::Baseline => Some(0),
        EncoderVariant::Bypass { depth } => Some(depth * block),
        EncoderVariant::Highway { depth } => Some(depth * (block + w * w + w)),
        EncoderVariant::DenseNet { .. } => None,
    }
}
