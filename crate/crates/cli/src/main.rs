//! `bidaf` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Extractive question answering with deep BiDAF model encoders.
#[derive(Debug, Parser)]
#[command(name = "bidaf", version, arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic QA corpus (train.json, dev.json, vectors.txt).
    Synth(SynthArgs),
    /// Build vocabularies for a corpus and report encoding statistics.
    Prepare(PrepareArgs),
    /// Train one model from a JSON run config.
    Train(TrainArgs),
    /// Score a trained run, or score a prediction file against gold data.
    Eval(EvalArgs),
    /// Train several encoder variants on identical data and compare them.
    Sweep(SweepArgs),
    /// Write answers for a SQuAD-format file.
    Predict(PredictArgs),
    /// Verify analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Draw metric curves from one or more metric logs as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// copy, char-sensitive, multi-hop or char-multi-hop.
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 512)]
    pub train: usize,
    #[arg(long, default_value_t = 128)]
    pub dev: usize,
    /// Filler words that receive vectors.
    #[arg(long, default_value_t = 200)]
    pub vocab_size: usize,
    /// Context length in tokens.
    #[arg(long, default_value_t = 12)]
    pub context_len: usize,
    /// Width of the emitted word vectors.
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// GloVe-format text file.
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    /// Output directory for vocab.json, prepare.json and a starter config.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `variant` in the config.
    #[arg(long)]
    pub variant: Option<String>,
    /// Overrides `max_steps` in the config.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Abort as soon as any operation produces a non-finite value.
    #[arg(long)]
    pub check_finite: bool,
    /// Suppress per-evaluation progress lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long, conflicts_with_all = ["preds", "gold"])]
    pub run: Option<PathBuf>,
    /// Checkpoint to load; defaults to <run>/best.ckpt.
    #[arg(long, requires = "run")]
    pub checkpoint: Option<PathBuf>,
    /// SQuAD-format file to evaluate instead of the run's dev split.
    #[arg(long, requires = "run")]
    pub data: Option<PathBuf>,
    /// Evaluation threads.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Write predictions (id to answer JSON) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Prediction file (id to answer JSON) to score.
    #[arg(long, requires = "gold")]
    pub preds: Option<PathBuf>,
    /// SQuAD-format gold file for --preds.
    #[arg(long, requires = "preds")]
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Base run config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated variants, e.g. baseline,bypass:3,highway:8.
    #[arg(long, value_delimiter = ',', required = true)]
    pub variants: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// SQuAD-format file with the questions.
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSON mapping id to answer ("" for no answer).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random directions checked per parameter of the composed model.
    #[arg(long, default_value_t = 4)]
    pub directions: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// f1, em, avna or loss.
    #[arg(long, default_value = "f1")]
    pub metric: String,
    /// Metric log as PATH:LABEL (label defaults to the file stem); repeat
    /// for several curves.
    #[arg(long = "log", required = true)]
    pub logs: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// train or dev.
    #[arg(long, default_value = "dev")]
    pub split: String,
    #[arg(long)]
    pub title: Option<String>,
    /// Trailing moving-average window.
    #[arg(long)]
    pub smooth: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
