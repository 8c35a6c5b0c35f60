//! Gradient verification suite: every differentiable op family plus the
//! composed model, all in f64 against central differences.

use crate::autodiff::{Graph, Var};
use crate::data::batch::{Batch, EncodedExample};
use crate::data::vocab::MAX_WORD_LEN;
use crate::error::Result;
use crate::gradcheck::{gradient_check, GradCheckOptions};
use crate::model::embedding::EmbeddingConfig;
use crate::model::encoder::EncoderVariant;
use crate::model::{BiDaf, ModelConfig};
use crate::param::{Init, ParamStore};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub max_rel_error: f64,
    pub coords: usize,
    /// Parameter and flat coordinate of the largest error.
    pub worst: Option<(String, usize)>,
    pub worst_values: (f64, f64),
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn random(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("shape matches")
}

/// Registers one parameter per input shape and checks `sum(op(inputs) ∘ R)`
/// for a fixed random `R` of shape `out_shape`.
pub fn check_op<F>(name: &str, shapes: &[&[usize]], out_shape: &[usize], seed: u64, build: F) -> Result<CheckOutcome>
where
    F: for<'a> Fn(&mut Graph<'a, f64>, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::<f64>::new();
    let ids = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| store.add(&format!("in{i}"), s, Init::Uniform(-1.0, 1.0), seed))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = RngStream::new(seed, 77);
    let weights = random(out_shape, &mut rng);
    let report = gradient_check(
        &mut store,
        |g| {
            let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
            let out = build(g, &vars)?;
            let r = g.constant(weights.clone());
            let r = g.reshape(r, g.shape(out).to_vec().as_slice())?;
            let y = g.mul(out, r)?;
            g.sum(y)
        },
        &GradCheckOptions::default(),
    )?;
    Ok(CheckOutcome {
        name: name.to_string(),
        max_rel_error: report.max_rel_error,
        coords: report.coords_checked,
        worst: report.worst,
        worst_values: report.worst_values,
    })
}

/// One outcome per primitive.
pub fn check_ops(seed: u64) -> Result<Vec<CheckOutcome>> {
    const MASK: [bool; 8] = [true, true, false, true, false, true, true, true];
    let mut out = vec![
        check_op("matmul", &[&[3, 4], &[4, 2]], &[3, 2], seed, |g, v| g.matmul(v[0], v[1]))?,
        check_op("linear", &[&[2, 3, 4], &[4, 5], &[5]], &[2, 3, 5], seed, |g, v| {
            g.linear(v[0], v[1], Some(v[2]))
        })?,
        check_op("add", &[&[6], &[6]], &[6], seed, |g, v| g.add(v[0], v[1]))?,
        check_op("sub", &[&[6], &[6]], &[6], seed, |g, v| g.sub(v[0], v[1]))?,
        check_op("mul", &[&[6], &[6]], &[6], seed, |g, v| g.mul(v[0], v[1]))?,
        check_op("broadcast_add", &[&[2, 3, 4], &[2, 1, 4]], &[2, 3, 4], seed, |g, v| {
            g.broadcast_add(v[0], v[1])
        })?,
        check_op("broadcast_mul", &[&[2, 3, 4], &[1, 3, 1]], &[2, 3, 4], seed, |g, v| {
            g.broadcast_mul(v[0], v[1])
        })?,
        check_op("affine", &[&[5]], &[5], seed, |g, v| g.affine(v[0], -2.5, 1.0))?,
        check_op("sigmoid", &[&[7]], &[7], seed, |g, v| g.sigmoid(v[0]))?,
        check_op("tanh", &[&[7]], &[7], seed, |g, v| g.tanh(v[0]))?,
        check_op("relu", &[&[7]], &[7], seed, |g, v| g.relu(v[0]))?,
        check_op("concat", &[&[2, 3], &[2, 1], &[2, 2]], &[2, 6], seed, |g, v| g.concat_last(v))?,
        check_op("slice", &[&[3, 5]], &[3, 2], seed, |g, v| g.slice_last(v[0], 2, 2))?,
        check_op("reshape", &[&[2, 3]], &[3, 2], seed, |g, v| g.reshape(v[0], &[3, 2]))?,
        check_op("masked_fill", &[&[4]], &[4], seed, |g, v| {
            // the fill value itself must stay out of the loss
            let filled = g.masked_fill(v[0], &[true, false, true, true])?;
            g.masked_softmax(filled, &[true; 4])
        })?,
        check_op("masked_softmax", &[&[2, 4]], &[2, 4], seed, |g, v| g.masked_softmax(v[0], &MASK))?,
        check_op("masked_log_softmax", &[&[2, 4]], &[2], seed, |g, v| {
            let l = g.masked_log_softmax(v[0], &MASK)?;
            g.gather_last(l, &[3, 1])
        })?,
        check_op("max", &[&[3, 4]], &[3], seed, |g, v| g.max_last(v[0]))?,
        check_op("bmm", &[&[2, 3, 4], &[2, 4, 5]], &[2, 3, 5], seed, |g, v| g.bmm(v[0], v[1], false))?,
        check_op("bmm_t", &[&[2, 3, 4], &[2, 5, 4]], &[2, 3, 5], seed, |g, v| g.bmm(v[0], v[1], true))?,
        check_op("embedding", &[&[5, 3]], &[2, 2, 3], seed, |g, v| g.embedding(v[0], &[4, 0, 4, 2], &[2, 2]))?,
        check_op("sum", &[&[6]], &[1], seed, |g, v| g.sum(v[0]))?,
        check_op("mean", &[&[6]], &[1], seed, |g, v| g.mean(v[0]))?,
        check_op("mul_const", &[&[4]], &[4], seed, |g, v| g.mul_const(v[0], vec![0.0, 1.25, 1.25, 0.0]))?,
    ];
    for reverse in [false, true] {
        let name = if reverse { "lstm_reverse" } else { "lstm" };
        out.push(check_op(name, &[&[3, 4, 3], &[3, 8], &[2, 8], &[8]], &[3, 4, 2], seed, |g, v| {
            g.lstm(v[0], &[4, 2, 1], v[1], v[2], v[3], reverse)
        })?);
    }
    out.push(check_op("conv_maxpool", &[&[3, 6, 2], &[6, 4], &[4]], &[3, 4], seed, |g, v| {
        g.conv1d_maxpool(v[0], v[1], v[2], 3)
    })?);
    Ok(out)
}

/// Two examples (context lengths 5 and 3, so N = 6 with the sentinel), one
/// answerable and one not.
pub fn tiny_batch() -> (Vec<EncodedExample>, Batch) {
    let chars = |w: usize| {
        let mut c = [0; MAX_WORD_LEN];
        for (k, slot) in c.iter_mut().take(1 + w % 3).enumerate() {
            *slot = 2 + (w + k) % 6;
        }
        c
    };
    let example = |source, ctx: &[usize], qst: &[usize], gold| EncodedExample {
        source,
        context_tokens: Vec::new(),
        context_words: ctx.to_vec(),
        context_chars: ctx.iter().map(|&w| chars(w)).collect(),
        question_words: qst.to_vec(),
        question_chars: qst.iter().map(|&w| chars(w)).collect(),
        gold,
    };
    let encoded = vec![
        example(0, &[3, 4, 1, 5, 6], &[7, 4, 8], Some((1, 2))),
        example(1, &[9, 3, 5], &[6, 1], None),
    ];
    let batch = Batch::build(&encoded, &[0, 1]);
    (encoded, batch)
}

/// Small f64 model over [`tiny_batch`] vocabularies (10 words, 8 chars).
pub fn tiny_model(variant: &EncoderVariant, use_char: bool, ensemble_k: usize, seed: u64) -> Result<(BiDaf, ParamStore<f64>)> {
    let config = ModelConfig {
        embedding: EmbeddingConfig {
            word_dim: 6,
            use_char,
            char_dim: 4,
            char_filters: 5,
            char_kernel: 3,
            hidden: 8,
            highway_layers: 1,
        },
        variant: variant.clone(),
        ensemble_k,
        ..ModelConfig::default()
    };
    let mut rng = RngStream::new(seed, 91);
    let vectors: Vec<f64> = (0..10 * 6).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut store = ParamStore::new();
    let model = BiDaf::new(&mut store, &config, 10, &vectors, 8, seed)?;
    // zero biases put ReLU units exactly on their kink; nudge every
    // trainable entry off it
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let p = store.get_mut(id);
        if p.frozen {
            continue;
        }
        let mut rng = RngStream::for_name(seed, &format!("nudge/{}", p.name));
        let width = p.value.last_dim();
        let rows = p.trainable_rows.clone();
        for (i, v) in p.value.data_mut().iter_mut().enumerate() {
            if rows.as_ref().map_or(true, |r| r.contains(&(i / width))) {
                *v += rng.uniform::<f64>(-0.1, 0.1);
            }
        }
    }
    Ok((model, store))
}

/// Full-model loss gradient check on [`tiny_batch`] along `directions`
/// gradient-aligned unit directions per parameter.
pub fn check_model(variant: &EncoderVariant, use_char: bool, ensemble_k: usize, seed: u64, directions: usize) -> Result<CheckOutcome> {
    let (model, mut store) = tiny_model(variant, use_char, ensemble_k, seed)?;
    let (_, batch) = tiny_batch();
    let report = gradient_check(
        &mut store,
        |g| Ok(model.loss(g, &batch, None)?.1),
        &GradCheckOptions {
            directions_per_param: Some(directions),
            seed,
            ..GradCheckOptions::default()
        },
    )?;
    let mut name = format!("model {variant}");
    if use_char {
        name.push_str(" +char");
    }
    if ensemble_k > 0 {
        name.push_str(&format!(" ensemble:{ensemble_k}"));
    }
    Ok(CheckOutcome {
        name,
        max_rel_error: report.max_rel_error,
        coords: report.coords_checked,
        worst: report.worst,
        worst_values: report.worst_values,
    })
}

/// Model configurations covered by [`run_suite`].
pub fn model_cases() -> Vec<(EncoderVariant, bool, usize)> {
    let v = |s: &str| s.parse::<EncoderVariant>().expect("valid variant");
    vec![
        (v("baseline"), true, 0),
        (v("bypass:2"), false, 2),
        (v("highway:2"), true, 1),
        (v("densenet:2+1"), false, 0),
    ]
}

/// Op families followed by the composed model cases.
pub fn run_suite(seed: u64, directions: usize) -> Result<Vec<CheckOutcome>> {
    let mut out = check_ops(seed)?;
    for (variant, use_char, k) in model_cases() {
        out.push(check_model(&variant, use_char, k, seed, directions)?);
    }
    Ok(out)
}
