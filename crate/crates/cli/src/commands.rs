use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bidaf::checks::{run_suite, CheckOutcome, TOLERANCE};
use bidaf::data::glove::write_glove;
use bidaf::data::squad::{load_squad_json, write_squad_json};
use bidaf::data::synth::{generate_synthetic_corpus, SynthSpec, Task};
use bidaf::metrics::{evaluate_predictions, EvalResult};
use bidaf::model::encoder::EncoderVariant;
use bidaf::plot::{emit_plot, Metric, PlotSpec};
use bidaf::train::dataset::{Dataset, Split};
use bidaf::train::log::{MetricRecord, SplitName};
use bidaf::train::{
    evaluate, load_run, sweep, train, DataConfig, LoadedRun, RunConfig, BEST_CHECKPOINT, COMPARISON_FILE, CONFIG_FILE,
    VOCAB_FILE,
};
use bidaf::{Error, Real, Result};
use serde_json::json;

use crate::{Command, EvalArgs, GradcheckArgs, PlotArgs, PredictArgs, PrepareArgs, SweepArgs, SynthArgs, TrainArgs};

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Plot(a) => plot(a),
    }
    .map(|ok| if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn synth(a: SynthArgs) -> Result<bool> {
    let task: Task = a.task.parse()?;
    let spec = SynthSpec {
        n_examples: a.train + a.dev,
        vocab_size: a.vocab_size,
        context_len: a.context_len,
        task,
        vector_dim: a.dim,
    };
    let corpus = generate_synthetic_corpus(&spec, a.seed)?;
    let mut train = corpus.examples;
    let dev = train.split_off(a.train);
    create_dir(&a.out)?;
    write_squad_json(&train, &format!("synthetic {task} train"), a.out.join("train.json"))?;
    write_squad_json(&dev, &format!("synthetic {task} dev"), a.out.join("dev.json"))?;
    write_glove(a.out.join("vectors.txt"), &corpus.vectors)?;
    println!(
        "wrote {} train, {} dev examples and {} vectors to {}",
        train.len(),
        dev.len(),
        corpus.vectors.len(),
        a.out.display()
    );
    Ok(true)
}

fn split_stats(split: &Split) -> serde_json::Value {
    json!({
        "examples": split.examples.len(),
        "kept": split.stats.kept,
        "unalignable": split.stats.unalignable,
        "empty": split.stats.empty,
    })
}

fn prepare(a: PrepareArgs) -> Result<bool> {
    let train = load_squad_json(&a.train)?;
    let dev = load_squad_json(&a.dev)?;
    let data = Dataset::from_vector_file(train, dev, &a.vectors, a.dim)?;
    create_dir(&a.out)?;
    data.vocabs.save(a.out.join(VOCAB_FILE))?;
    let stats = json!({
        "words": data.vocabs.words.len(),
        "chars": data.vocabs.chars.len(),
        "vectors_found": data.vectors.found.iter().filter(|&&f| f).count(),
        "train": split_stats(&data.train),
        "dev": split_stats(&data.dev),
    });
    write_json(&a.out.join("prepare.json"), &stats)?;
    let cfg = RunConfig {
        word_dim: a.dim,
        data: DataConfig::Files {
            train: a.train.clone(),
            dev: a.dev.clone(),
            vectors: a.vectors.clone(),
        },
        ..RunConfig::default()
    };
    cfg.save(a.out.join(CONFIG_FILE))?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(true)
}

fn print_record(prefix: &str, r: &MetricRecord) {
    eprintln!(
        "{prefix}step {:>6} {:<5} loss {:>8.4} EM {:>6.2} F1 {:>6.2} AvNA {:>6.2}",
        r.step, r.split, r.loss, r.em, r.f1, r.avna
    );
}

fn train_cmd(a: TrainArgs) -> Result<bool> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(out) = a.out {
        cfg.output_dir = Some(out);
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &a.variant {
        cfg.variant = v.parse()?;
    }
    if let Some(n) = a.max_steps {
        cfg.max_steps = n;
    }
    cfg.check_finite |= a.check_finite;
    let quiet = a.quiet;
    let out = train(&cfg, &mut |r| {
        if !quiet {
            print_record("", r);
        }
    })?;
    match out.best {
        Some((step, result)) => println!("best dev at step {step}: {}", result.to_json_line()),
        None => println!("no dev evaluation recorded"),
    }
    if let Some(dir) = &cfg.output_dir {
        println!("run written to {}", dir.display());
    }
    Ok(true)
}

fn open_run(run: &Path, checkpoint: Option<PathBuf>) -> Result<LoadedRun<Real>> {
    let ckpt = checkpoint.unwrap_or_else(|| run.join(BEST_CHECKPOINT));
    load_run::<Real>(run, &ckpt)
}

/// Examples the run was evaluated on: `data` if given, else the run's dev split.
fn run_examples(loaded: &LoadedRun<Real>, data: Option<&Path>) -> Result<Split> {
    let examples = match data {
        Some(p) => load_squad_json(p)?,
        None => match &loaded.config.data {
            DataConfig::Files { dev, .. } => load_squad_json(dev)?,
            DataConfig::Synthetic { .. } => bidaf::train::load_dataset(&loaded.config)?.dev.examples,
        },
    };
    Ok(loaded.split(examples))
}

fn report(result: &EvalResult) {
    println!("{}", result.to_json_line());
    println!("{result}");
}

fn eval(a: EvalArgs) -> Result<bool> {
    if let (Some(preds), Some(gold)) = (&a.preds, &a.gold) {
        let text = fs::read_to_string(preds).map_err(|e| Error::Io {
            path: preds.clone(),
            source: e,
        })?;
        let map: HashMap<String, String> = serde_json::from_str(&text)?;
        let golds = load_squad_json(gold)?;
        report(&evaluate_predictions(&map, &golds)?);
        return Ok(true);
    }
    let Some(run) = &a.run else {
        return Err(Error::Config("eval needs --run DIR or --preds FILE --gold FILE".into()));
    };
    let loaded = open_run(run, a.checkpoint)?;
    let split = run_examples(&loaded, a.data.as_deref())?;
    let e = evaluate(&loaded.model, &loaded.store, &split, None, loaded.config.batch_size, a.workers)?;
    if let Some(out) = &a.out {
        write_json(out, &serde_json::to_value(&e.predictions)?)?;
    }
    report(&e.result);
    Ok(true)
}

fn sweep_cmd(a: SweepArgs) -> Result<bool> {
    let mut cfg = RunConfig::load(&a.config)?;
    cfg.output_dir = Some(a.out.clone());
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.max_steps {
        cfg.max_steps = n;
    }
    let variants = a
        .variants
        .iter()
        .map(|v| v.parse::<EncoderVariant>())
        .collect::<Result<Vec<_>>>()?;
    let quiet = a.quiet;
    let rows = sweep(&cfg, &variants, &mut |label, r| {
        if !quiet {
            print_record(&format!("[{label}] "), r);
        }
    })?;
    println!("{:<16}{:>9}{:>9}{:>9}{:>8}", "variant", "F1", "EM", "AvNA", "step");
    for r in &rows {
        println!(
            "{:<16}{:>9.2}{:>9.2}{:>9.2}{:>8}",
            r.variant, r.best_f1, r.best_em, r.best_avna, r.step_of_best
        );
    }
    println!("comparison written to {}", a.out.join(COMPARISON_FILE).display());
    Ok(true)
}

fn predict(a: PredictArgs) -> Result<bool> {
    let loaded = open_run(&a.run, a.checkpoint)?;
    let split = loaded.split(load_squad_json(&a.input)?);
    let e = evaluate(&loaded.model, &loaded.store, &split, None, loaded.config.batch_size, a.workers)?;
    write_json(&a.out, &serde_json::to_value(&e.predictions)?)?;
    println!("wrote {} predictions to {}", e.predictions.len(), a.out.display());
    Ok(true)
}

fn print_check(c: &CheckOutcome) {
    let status = if c.passed() { "ok" } else { "FAIL" };
    print!("{:<36}{:>12.3e}{:>8}  {status}", c.name, c.max_rel_error, c.coords);
    if !c.passed() {
        if let Some((param, idx)) = &c.worst {
            print!("  worst {param}[{idx}] analytic {:.6e} numeric {:.6e}", c.worst_values.0, c.worst_values.1);
        }
    }
    println!();
}

fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    if a.directions == 0 {
        return Err(Error::Config("--directions must be at least 1".into()));
    }
    let outcomes = run_suite(a.seed, a.directions)?;
    println!("{:<36}{:>12}{:>8}", "family", "max rel err", "checks");
    for c in &outcomes {
        print_check(c);
    }
    let worst = outcomes.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let ok = outcomes.iter().all(CheckOutcome::passed);
    println!(
        "{} families, worst {worst:.3e}, tolerance {TOLERANCE:.0e}: {}",
        outcomes.len(),
        if ok { "passed" } else { "FAILED" }
    );
    Ok(ok)
}

/// `PATH:LABEL`, or `PATH` labelled by its file stem.
fn parse_log(arg: &str) -> Result<(String, PathBuf)> {
    let (path, label) = match arg.rsplit_once(':') {
        Some((p, l)) if !p.is_empty() && !l.is_empty() && !l.contains(['/', '\\']) => (PathBuf::from(p), l.to_string()),
        _ => {
            let path = PathBuf::from(arg);
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Plot(format!("cannot derive a label from `{arg}`")))?
                .to_string();
            (path, stem)
        }
    };
    Ok((label, path))
}

fn plot(a: PlotArgs) -> Result<bool> {
    let spec = PlotSpec {
        metric: a.metric.parse::<Metric>()?,
        split: a.split.parse::<SplitName>()?,
        logs: a.logs.iter().map(|l| parse_log(l)).collect::<Result<_>>()?,
        out: a.out,
        title: a.title,
        smooth: a.smooth,
    };
    emit_plot(&spec)?;
    println!("wrote {}", spec.out.display());
    Ok(true)
}
