//! Training loop, evaluation, checkpoints, metric logs and variant sweeps.

pub mod checkpoint;
pub mod dataset;
pub mod log;
pub mod optim;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::batch::{make_batches, Batch};
use crate::data::squad::{load_squad_json, SquadExample};
use crate::data::synth::{generate_synthetic_corpus, SynthSpec, Task};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_predictions, EvalResult};
use crate::model::embedding::EmbeddingConfig;
use crate::model::encoder::EncoderVariant;
use crate::model::layers::Dropout;
use crate::model::output::{detokenize_answer, SpanPrediction};
use crate::model::{BiDaf, ModelConfig};
use crate::param::ParamStore;
use crate::rng::{streams, RngStream};
use crate::scalar::Scalar;

use dataset::{Dataset, Split, Vocabs};
use log::{MetricRecord, SplitName};
use optim::{clip_global_norm, mask_gradients, Optimizer, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataConfig {
    /// Generated corpus: the first `train` examples train, the next `dev`
    /// examples evaluate.
    Synthetic {
        task: Task,
        train: usize,
        dev: usize,
        vocab_size: usize,
        context_len: usize,
        /// Defaults to the run seed.
        #[serde(default)]
        corpus_seed: Option<u64>,
    },
    Files {
        train: PathBuf,
        dev: PathBuf,
        vectors: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: EncoderVariant,
    pub use_char: bool,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_kernel: usize,
    pub hidden: usize,
    pub highway_layers: usize,
    /// Output ensemble over the last k stack layers; 0 turns it off.
    pub ensemble_k: usize,
    pub dropout: f64,
    pub gate_bias: f64,
    pub zero_init_blocks: bool,
    pub max_answer_len: usize,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub data: DataConfig,
    pub output_dir: Option<PathBuf>,
    pub eval_workers: usize,
    /// Train-split examples scored at each evaluation.
    pub train_eval_limit: usize,
    pub check_finite: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        RunConfig {
            variant: m.variant,
            use_char: m.embedding.use_char,
            word_dim: m.embedding.word_dim,
            char_dim: m.embedding.char_dim,
            char_filters: m.embedding.char_filters,
            char_kernel: m.embedding.char_kernel,
            hidden: m.embedding.hidden,
            highway_layers: m.embedding.highway_layers,
            ensemble_k: m.ensemble_k,
            dropout: 0.1,
            gate_bias: m.gate_bias,
            zero_init_blocks: m.zero_init_blocks,
            max_answer_len: m.max_answer_len,
            optimizer: OptimizerConfig::default(),
            batch_size: 32,
            max_steps: 1000,
            eval_every: 100,
            seed: 1,
            data: DataConfig::Synthetic {
                task: Task::Copy,
                train: 512,
                dev: 128,
                vocab_size: 200,
                context_len: 12,
                corpus_seed: None,
            },
            output_dir: None,
            eval_workers: 1,
            train_eval_limit: 512,
            check_finite: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must be in [0, 1)", self.dropout)));
        }
        if self.ensemble_k > self.variant.layer_outputs() {
            return Err(Error::Config(format!(
                "ensemble_k {} exceeds the {} layer outputs of {}",
                self.ensemble_k,
                self.variant.layer_outputs(),
                self.variant
            )));
        }
        self.model().embedding.validate()
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            embedding: EmbeddingConfig {
                word_dim: self.word_dim,
                use_char: self.use_char,
                char_dim: self.char_dim,
                char_filters: self.char_filters,
                char_kernel: self.char_kernel,
                hidden: self.hidden,
                highway_layers: self.highway_layers,
            },
            variant: self.variant.clone(),
            gate_bias: self.gate_bias,
            zero_init_blocks: self.zero_init_blocks,
            ensemble_k: self.ensemble_k,
            max_answer_len: self.max_answer_len,
        }
    }
}

/// Loads or generates the corpus named by `data`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        DataConfig::Synthetic {
            task,
            train,
            dev,
            vocab_size,
            context_len,
            corpus_seed,
        } => {
            let spec = SynthSpec {
                n_examples: train + dev,
                vocab_size: *vocab_size,
                context_len: *context_len,
                task: *task,
                vector_dim: cfg.word_dim,
            };
            let corpus = generate_synthetic_corpus(&spec, corpus_seed.unwrap_or(cfg.seed))?;
            let mut examples = corpus.examples;
            let dev_part = examples.split_off(*train);
            Dataset::from_vectors(examples, dev_part, &corpus.vectors, cfg.word_dim)
        }
        DataConfig::Files { train, dev, vectors } => {
            Dataset::from_vector_file(load_squad_json(train)?, load_squad_json(dev)?, vectors, cfg.word_dim)
        }
    }
}

/// Digest binding a checkpoint to its model configuration and vocabularies.
pub fn model_digest(model: &ModelConfig, vocabs: &Vocabs) -> Result<[u8; 32]> {
    let canonical = serde_json::to_string(&(model, vocabs.words.len(), vocabs.chars.len()))?;
    Ok(checkpoint::config_digest(&canonical))
}

/// Fresh model and parameters for a dataset.
pub fn build_model<T: Scalar>(model: &ModelConfig, dataset_vocabs: &Vocabs, vectors: &[f64], seed: u64) -> Result<(BiDaf, ParamStore<T>)> {
    let mut store = ParamStore::new();
    let net = BiDaf::new(
        &mut store,
        model,
        dataset_vocabs.words.len(),
        vectors,
        dataset_vocabs.chars.len(),
        seed,
    )?;
    Ok((net, store))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub result: EvalResult,
    /// Mean span loss over the scored examples.
    pub loss: f64,
    /// Example id to answer text (empty for no answer).
    pub predictions: BTreeMap<String, String>,
}

struct BatchOutcome {
    loss_sum: f64,
    spans: Vec<SpanPrediction>,
}

fn run_eval_batch<T: Scalar>(model: &BiDaf, store: &ParamStore<T>, batch: &Batch) -> Result<BatchOutcome> {
    let mut g = Graph::new(store);
    g.set_check_finite(false);
    let (fwd, loss) = model.loss(&mut g, batch, None)?;
    let n = batch.n;
    let probs = |v| -> Vec<f64> { g.value(v).data().iter().map(|x: &T| x.as_f64().exp()).collect() };
    let (ps, pe) = (probs(fwd.log_start), probs(fwd.log_end));
    let spans = (0..batch.size)
        .map(|r| {
            crate::model::output::decode_best_span(&ps[r * n..(r + 1) * n], &pe[r * n..(r + 1) * n], model.config.max_answer_len)
        })
        .collect();
    Ok(BatchOutcome {
        loss_sum: g.value(loss).data()[0].as_f64() * batch.size as f64,
        spans,
    })
}

/// Deterministic evaluation. With `limit`, only the first `limit` encoded
/// examples are scored; otherwise every example of the split is, with
/// examples dropped during encoding predicted as no-answer. `workers > 1`
/// spreads batches over threads and gives the same result as serial.
pub fn evaluate<T: Scalar>(model: &BiDaf, store: &ParamStore<T>, split: &Split, limit: Option<usize>, batch_size: usize, workers: usize) -> Result<Evaluation> {
    let encoded = match limit {
        Some(k) => &split.encoded[..k.min(split.encoded.len())],
        None => &split.encoded[..],
    };
    let batches = make_batches(encoded, batch_size, None);
    let outcomes: Vec<BatchOutcome> = if workers <= 1 || batches.len() <= 1 {
        batches.iter().map(|b| run_eval_batch(model, store, b)).collect::<Result<_>>()?
    } else {
        let chunk = batches.len().div_ceil(workers);
        let parts: Vec<Result<Vec<BatchOutcome>>> = std::thread::scope(|s| {
            let handles: Vec<_> = batches
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|b| run_eval_batch(model, store, b)).collect::<Result<Vec<_>>>()))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        });
        let mut all = Vec::with_capacity(batches.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };

    let mut predictions = BTreeMap::new();
    let mut loss_sum = 0.0;
    for (batch, out) in batches.iter().zip(&outcomes) {
        loss_sum += out.loss_sum;
        for (&i, span) in batch.examples.iter().zip(&out.spans) {
            let enc = &encoded[i];
            let ex = &split.examples[enc.source];
            predictions.insert(ex.id.clone(), detokenize_answer(&ex.context, &enc.context_tokens, span));
        }
    }
    let golds: Vec<SquadExample> = match limit {
        Some(_) => encoded.iter().map(|e| split.examples[e.source].clone()).collect(),
        None => {
            for ex in &split.examples {
                predictions.entry(ex.id.clone()).or_default();
            }
            split.examples.clone()
        }
    };
    let as_map: HashMap<String, String> = predictions.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let result = evaluate_predictions(&as_map, &golds)?;
    Ok(Evaluation {
        result,
        loss: if encoded.is_empty() { 0.0 } else { loss_sum / encoded.len() as f64 },
        predictions,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: BiDaf,
    /// Parameters after the last step.
    pub store: ParamStore<T>,
    /// Checkpoint bytes of the best-dev-F1 parameters.
    pub best_checkpoint: Vec<u8>,
    pub digest: [u8; 32],
    pub records: Vec<MetricRecord>,
    /// Training loss of every step, in order.
    pub step_losses: Vec<f64>,
    pub best: Option<(usize, EvalResult)>,
}

fn record(step: usize, split: SplitName, e: &Evaluation) -> MetricRecord {
    MetricRecord {
        step,
        split,
        loss: e.loss,
        em: e.result.em,
        f1: e.result.f1,
        avna: e.result.avna,
    }
}

fn divergence_report<T: Scalar>(store: &ParamStore<T>) -> String {
    let mut groups: BTreeMap<String, f64> = BTreeMap::new();
    for (_, p) in store.iter() {
        let key = p.name.split('.').take(2).collect::<Vec<_>>().join(".");
        let sq: f64 = p.value.data().iter().map(|v| v.as_f64() * v.as_f64()).sum();
        *groups.entry(key).or_default() += sq;
    }
    groups
        .into_iter()
        .map(|(k, v)| format!("{k}={:.3e}", v.sqrt()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Trains on an already-built dataset. `progress` sees every metric record
/// as it is produced.
pub fn train_on<T: Scalar>(cfg: &RunConfig, data: &Dataset, progress: &mut dyn FnMut(&MetricRecord)) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.train.encoded.is_empty() || data.dev.encoded.is_empty() {
        return Err(Error::Config("train and dev splits must both be non-empty after encoding".into()));
    }
    let model_cfg = cfg.model();
    let (model, mut store) = build_model::<T>(&model_cfg, &data.vocabs, &data.vectors.values, cfg.seed)?;
    let digest = model_digest(&model_cfg, &data.vocabs)?;
    let mut opt = Optimizer::new(&cfg.optimizer, &store)?;
    let mut order = RngStream::new(cfg.seed, streams::DATA_ORDER);

    let mut records = Vec::new();
    let mut best: Option<(usize, EvalResult)> = None;
    let mut best_checkpoint = checkpoint::encode(&store, &digest);
    let mut evaluate_at = |step: usize, store: &ParamStore<T>, records: &mut Vec<MetricRecord>| -> Result<()> {
        let tr = evaluate(&model, store, &data.train, Some(cfg.train_eval_limit), cfg.batch_size, cfg.eval_workers)?;
        let dv = evaluate(&model, store, &data.dev, None, cfg.batch_size, cfg.eval_workers)?;
        for r in [record(step, SplitName::Train, &tr), record(step, SplitName::Dev, &dv)] {
            progress(&r);
            records.push(r);
        }
        if best.map_or(true, |(_, b)| dv.result.f1 > b.f1) {
            best = Some((step, dv.result));
            best_checkpoint = checkpoint::encode(store, &digest);
        }
        Ok(())
    };
    evaluate_at(0, &store, &mut records)?;

    let mut step_losses = Vec::with_capacity(cfg.max_steps);
    let mut queue: Vec<Batch> = Vec::new();
    for step in 1..=cfg.max_steps {
        if queue.is_empty() {
            queue = make_batches(&data.train.encoded, cfg.batch_size, Some(&mut order));
            queue.reverse();
        }
        let batch = queue.pop().expect("non-empty epoch");
        let dropout = Dropout {
            rate: cfg.dropout,
            seed: cfg.seed,
            step: step as u64,
        };
        let mut grads = {
            let mut g = Graph::new(&store);
            g.set_check_finite(cfg.check_finite);
            let (_, loss) = model
                .loss(&mut g, &batch, Some(&dropout))
                .map_err(|e| match e {
                    Error::NonFinite { op } => Error::Diverged {
                        step,
                        diagnostic: format!("non-finite output of {op}; parameter norms: {}", divergence_report(&store)),
                    },
                    other => other,
                })?;
            let value = g.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(Error::Diverged {
                    step,
                    diagnostic: format!("loss {value}; parameter norms: {}", divergence_report(&store)),
                });
            }
            step_losses.push(value);
            g.backward(loss)?.into_params()
        };
        mask_gradients(&store, &mut grads);
        clip_global_norm(&mut grads, cfg.optimizer.grad_clip);
        opt.step(&mut store, &grads);

        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            evaluate_at(step, &store, &mut records)?;
        }
    }
    drop(evaluate_at);

    let outcome = TrainOutcome {
        model,
        store,
        best_checkpoint,
        digest,
        records,
        step_losses,
        best,
    };
    if let Some(dir) = &cfg.output_dir {
        write_run(dir, cfg, data, &outcome)?;
    }
    Ok(outcome)
}

/// Trains with the parameter type [`crate::Real`].
pub fn train(cfg: &RunConfig, progress: &mut dyn FnMut(&MetricRecord)) -> Result<TrainOutcome<crate::Real>> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    train_on(cfg, &data, progress)
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const LOSSES_FILE: &str = "losses.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.json";

fn write_run<T: Scalar>(dir: &Path, cfg: &RunConfig, data: &Dataset, out: &TrainOutcome<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cfg.save(dir.join(CONFIG_FILE))?;
    data.vocabs.save(dir.join(VOCAB_FILE))?;
    log::write_log(dir.join(METRICS_FILE), &out.records)?;
    write_losses(dir.join(LOSSES_FILE), &out.step_losses)?;
    let best = dir.join(BEST_CHECKPOINT);
    fs::write(&best, &out.best_checkpoint).map_err(|e| Error::io(&best, e))?;
    checkpoint::save(dir.join(LAST_CHECKPOINT), &out.store, &out.digest)
}

pub fn write_losses(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A trained run restored from its output directory.
pub struct LoadedRun<T> {
    pub config: RunConfig,
    pub vocabs: Vocabs,
    pub model: BiDaf,
    pub store: ParamStore<T>,
}

/// Rebuilds the model of `run_dir` and loads `checkpoint` into it.
pub fn load_run<T: Scalar>(run_dir: &Path, checkpoint_path: &Path) -> Result<LoadedRun<T>> {
    let config = RunConfig::load(run_dir.join(CONFIG_FILE))?;
    let vocabs = Vocabs::load(run_dir.join(VOCAB_FILE))?;
    let model_cfg = config.model();
    let zeros = vec![0.0; vocabs.words.len() * config.word_dim];
    let (model, mut store) = build_model::<T>(&model_cfg, &vocabs, &zeros, config.seed)?;
    let digest = model_digest(&model_cfg, &vocabs)?;
    checkpoint::load_into(checkpoint_path, &mut store, &digest)?;
    Ok(LoadedRun {
        config,
        vocabs,
        model,
        store,
    })
}

impl<T: Scalar> LoadedRun<T> {
    pub fn split(&self, examples: Vec<SquadExample>) -> Split {
        Split::new(examples, &self.vocabs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variant: String,
    pub best_f1: f64,
    pub best_em: f64,
    pub best_avna: f64,
    pub step_of_best: usize,
}

pub const COMPARISON_FILE: &str = "comparison.csv";

/// Directory-safe label for a variant.
pub fn variant_label(v: &EncoderVariant) -> String {
    v.to_string().replace([':', '+'], "_")
}

/// Best dev record (first maximum of F1).
pub fn best_dev(records: &[MetricRecord]) -> Option<MetricRecord> {
    records
        .iter()
        .filter(|r| r.split == SplitName::Dev)
        .fold(None, |acc: Option<MetricRecord>, r| match acc {
            Some(b) if b.f1 >= r.f1 => Some(b),
            _ => Some(*r),
        })
}

/// Trains every variant on the same data, batch order and seed. With an
/// output directory, writes `<label>/` per variant and `comparison.csv`.
pub fn sweep(base: &RunConfig, variants: &[EncoderVariant], progress: &mut dyn FnMut(&str, &MetricRecord)) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let data = load_dataset(base)?;
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let mut cfg = base.clone();
        cfg.variant = v.clone();
        cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(variant_label(v)));
        let label = v.to_string();
        let out = train_on::<crate::Real>(&cfg, &data, &mut |r| progress(&label, r))?;
        let best = best_dev(&out.records).expect("training records dev metrics");
        rows.push(SweepRow {
            variant: label,
            best_f1: best.f1,
            best_em: best.em,
            best_avna: best.avna,
            step_of_best: best.step,
        });
    }
    if let Some(dir) = &base.output_dir {
        let path = dir.join(COMPARISON_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(rows)
}
