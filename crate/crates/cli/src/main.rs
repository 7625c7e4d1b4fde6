mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{BadInput, CheckFailed};

#[derive(Parser, Debug)]
#[command(name = "setgnn", version, about = "Train and evaluate set-compatibility graph networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a planted-style synthetic dataset with corpora and FITB questions.
    GenSynth(GenSynthArgs),
    /// Sample a labelled ensemble corpus from an embedding table.
    Sample(SampleArgs),
    /// Train a model and write the best checkpoint and a report.
    Train(TrainArgs),
    /// Score one set of items.
    Score(ScoreArgs),
    /// Compatibility AUC on a labelled corpus.
    Eval(EvalArgs),
    /// Fill-in-the-blank accuracy.
    Fitb(FitbArgs),
    /// Finite-difference gradient check of both models at toy sizes.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 4)]
    pub styles: usize,
    #[arg(long, default_value_t = 50)]
    pub per_style: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 6)]
    pub max_len: usize,
    /// Positive samples in the training corpus; as many negatives are added.
    #[arg(long, default_value_t = 1000)]
    pub train_positives: usize,
    #[arg(long, default_value_t = 200)]
    pub val_positives: usize,
    #[arg(long, default_value_t = 200)]
    pub test_positives: usize,
    /// Output directory.
    #[arg(long, default_value = "synth")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Curated sets; when given, positives are these sets instead of
    /// single-style draws.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Number of positives (style mode) or maximum number of sets used.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 6)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write FITB questions built from the positives.
    #[arg(long)]
    pub fitb_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub message_dim: Option<usize>,
    #[arg(long)]
    pub edge_dim: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub mlp_depth: Option<usize>,
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub lr_gnn: Option<f64>,
    #[arg(long)]
    pub lr_backbone: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// on | off
    #[arg(long)]
    pub normalization: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Comma-separated item ids.
    #[arg(long, value_delimiter = ',', required = true)]
    pub items: Vec<String>,
    #[arg(long)]
    pub pairwise: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub pairwise: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args, Debug)]
pub struct FitbArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub pairwise: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Number of random seeds per model.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// 0 success, 2 bad input, 3 failed check, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 3;
    }
    if err.downcast_ref::<BadInput>().is_some() {
        return 2;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<setgnn::Error>() {
            return match e {
                setgnn::Error::Divergence { .. } => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => commands::gen_synth(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Train(a) => commands::train(&a),
        Command::Score(a) => commands::score(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Fitb(a) => commands::fitb(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
