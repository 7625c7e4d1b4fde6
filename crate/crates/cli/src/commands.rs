use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use setgnn::autodiff::GradCheckOptions;
use setgnn::data::{
    make_fitb_questions, positive_sets, sample_collection_ensembles, sample_graphs, sample_style_ensembles,
    save_corpus, save_fitb, save_manifest, synthetic_corpus, EmbeddingTable, EnsembleSample, LengthRange, SynthSpec,
};
use setgnn::eval::{emit_report, model_auc, model_fitb, Report, ScoringMode};
use setgnn::model::check_model_gradients;
use setgnn::train::{train as run_training, worker_pool};
use setgnn::{CompatModel, Variant};

use crate::config::RunConfig;
use crate::{EvalArgs, FitbArgs, GenSynthArgs, GradcheckArgs, SampleArgs, ScoreArgs, TrainArgs};

const GIT_DESCRIBE: &str = env!("SETGNN_GIT_DESCRIBE");
const DEFAULT_CHECKPOINT: &str = "model.ckpt";

/// A verification command ran to completion and found a failure.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "check failed: {}", self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// Invalid arguments or configuration detected by the CLI itself.
#[derive(Debug)]
pub struct BadInput(pub String);

impl fmt::Display for BadInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadInput {}

fn bad_input(message: impl Into<String>) -> anyhow::Error {
    BadInput(message.into()).into()
}

fn scoring_mode(pairwise: bool) -> ScoringMode {
    if pairwise {
        ScoringMode::Pairwise
    } else {
        ScoringMode::Full
    }
}

fn write_or_print(report: &Report, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => emit_report(report, p)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn load_pair(checkpoint: &Path, embeddings: &Path) -> Result<(CompatModel, EmbeddingTable)> {
    let model = CompatModel::load(checkpoint)?;
    let table = EmbeddingTable::load(embeddings)?;
    Ok((model, table))
}

pub fn gen_synth(args: &GenSynthArgs) -> Result<()> {
    let spec = SynthSpec {
        styles: args.styles,
        per_style: args.per_style,
        dim: args.dim,
        sigma: args.sigma,
        lengths: LengthRange::new(args.min_len, args.max_len)?,
        train_positives: args.train_positives,
        val_positives: args.val_positives,
        test_positives: args.test_positives,
        seed: args.seed,
    };
    let corpus = synthetic_corpus(&spec)?;
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| setgnn::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    corpus.table.save(&out.join("embeddings.tsv"))?;
    save_corpus(&corpus.train, &out.join("train.tsv"))?;
    save_corpus(&corpus.val, &out.join("val.tsv"))?;
    save_corpus(&corpus.test, &out.join("test.tsv"))?;
    save_manifest(&corpus.test_sets, &out.join("sets.tsv"))?;
    save_fitb(&corpus.fitb, &out.join("fitb.tsv"))?;
    log::info!(
        "wrote {} items, {}/{}/{} samples and {} FITB questions to {}",
        corpus.table.len(),
        corpus.train.len(),
        corpus.val.len(),
        corpus.test.len(),
        corpus.fitb.len(),
        out.display()
    );
    Ok(())
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let table = EmbeddingTable::load(&args.embeddings)?;
    let samples = match &args.manifest {
        Some(path) => {
            let sets = setgnn::data::load_manifest(path)?;
            sample_collection_ensembles(&sets, args.count, args.seed)?
        }
        None => {
            let lengths = LengthRange::new(args.min_len, args.max_len)?;
            let count = args
                .count
                .ok_or_else(|| bad_input("--count is required without --manifest"))?;
            sample_style_ensembles(&table, count, lengths, args.seed)?
        }
    };
    save_corpus(&samples, &args.out)?;
    if let Some(path) = &args.fitb_out {
        let questions = make_fitb_questions(&positive_sets(&samples), &table, args.seed.wrapping_add(1))?;
        save_fitb(&questions, path)?;
        log::info!("wrote {} FITB questions to {}", questions.len(), path.display());
    }
    log::info!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}

fn items_of(samples: &[EnsembleSample]) -> BTreeSet<&str> {
    samples
        .iter()
        .flat_map(|s| s.item_ids.iter().map(String::as_str))
        .collect()
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        config.apply_file(path).map_err(|e| bad_input(format!("{e:#}")))?;
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let flags: [(&str, Option<String>); 22] = [
        ("variant", args.variant.clone()),
        ("message_dim", args.message_dim.map(|v| v.to_string())),
        ("edge_dim", args.edge_dim.map(|v| v.to_string())),
        ("steps", args.steps.map(|v| v.to_string())),
        ("mlp_depth", args.mlp_depth.map(|v| v.to_string())),
        ("mlp_hidden", args.mlp_hidden.map(|v| v.to_string())),
        ("margin", args.margin.map(|v| v.to_string())),
        ("lr_gnn", args.lr_gnn.map(|v| v.to_string())),
        ("lr_backbone", args.lr_backbone.map(|v| v.to_string())),
        ("beta1", args.beta1.map(|v| v.to_string())),
        ("beta2", args.beta2.map(|v| v.to_string())),
        ("epsilon", args.epsilon.map(|v| v.to_string())),
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("batch_size", args.batch_size.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("normalization", args.normalization.clone()),
        ("workers", args.workers.map(|v| v.to_string())),
        ("embeddings", path(&args.embeddings)),
        ("train", path(&args.train)),
        ("val", path(&args.val)),
        ("checkpoint", path(&args.checkpoint)),
        ("report", path(&args.report)),
    ];
    debug_assert!(flags.iter().map(|(k, _)| *k).eq(RunConfig::KEYS.iter().copied()));
    for (key, value) in flags {
        if let Some(v) = value {
            config.set(key, &v).map_err(|e| bad_input(format!("--{key}: {e:#}")))?;
        }
    }
    Ok(config)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let config = resolve_config(args)?;
    let embeddings = config
        .embeddings
        .clone()
        .ok_or_else(|| bad_input("no embeddings file given (--embeddings or config key)"))?;
    let train_path = config
        .train
        .clone()
        .ok_or_else(|| bad_input("no training corpus given (--train or config key)"))?;
    let table = EmbeddingTable::load(&embeddings)?;
    let train_samples = setgnn::data::load_corpus(&train_path)?;
    let val_samples = match &config.val {
        Some(p) => setgnn::data::load_corpus(p)?,
        None => Vec::new(),
    };
    let shared = items_of(&train_samples).intersection(&items_of(&val_samples)).count();
    if shared > 0 {
        log::warn!("{shared} items appear in both the training and validation corpora");
    }
    let train_graphs = sample_graphs(&table, &train_samples)?;
    let val_graphs = sample_graphs(&table, &val_samples)?;

    let model = CompatModel::new(config.model_config(table.dim()), config.seed)?;
    let pool = worker_pool(config.workers)?;
    let outcome = run_training(model, &train_graphs, &val_graphs, &config.train_config(), pool.as_ref())?;

    let checkpoint = config
        .checkpoint
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CHECKPOINT));
    outcome
        .best
        .save(&checkpoint)
        .with_context(|| format!("saving checkpoint {}", checkpoint.display()))?;

    let mut report = Report::new();
    report.set("git_describe", GIT_DESCRIBE).set("command", "train");
    for record in &outcome.history {
        report.set(format!("epoch.{}.train_loss", record.epoch), record.train_loss);
        let auc = record.val_auc.map_or("-".to_string(), |a| a.to_string());
        report.set(format!("epoch.{}.val_auc", record.epoch), auc);
    }
    report.set("best_epoch", outcome.best_epoch);
    let best_auc = outcome
        .history
        .iter()
        .find(|r| r.epoch == outcome.best_epoch)
        .and_then(|r| r.val_auc);
    report.set("best_val_auc", best_auc.map_or("-".to_string(), |a| a.to_string()));
    report.set("checkpoint", checkpoint.display());
    report.extend_prefixed("config", config.entries());
    write_or_print(&report, config.report.as_deref())
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let (model, table) = load_pair(&args.checkpoint, &args.embeddings)?;
    let graph = table.graph("query", &args.items, None)?;
    let s = match scoring_mode(args.pairwise) {
        ScoringMode::Full => model.score(&graph)?,
        ScoringMode::Pairwise => model.score_pairwise_average(&graph)?,
    };
    println!("score={}", s.score);
    match model.variant() {
        Variant::Centroid => {
            if let (Some(spread), Some(sig)) = (s.spread, s.sigmoid_spread) {
                println!("spread={spread}");
                println!("sigmoid_spread={sig}");
            }
        }
        Variant::Learned => {
            if let Some(logit) = s.logit {
                println!("logit={logit}");
            }
        }
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let (model, table) = load_pair(&args.checkpoint, &args.embeddings)?;
    let samples = setgnn::data::load_corpus(&args.corpus)?;
    let graphs = sample_graphs(&table, &samples)?;
    let pool = worker_pool(args.workers)?;
    let auc = model_auc(&model, &graphs, scoring_mode(args.pairwise), pool.as_ref())?;
    println!("auc={auc}");
    if let Some(path) = &args.report {
        let mut report = Report::new();
        report
            .set("git_describe", GIT_DESCRIBE)
            .set("command", "eval")
            .set("scoring", if args.pairwise { "pairwise" } else { "full" })
            .set("samples", graphs.len())
            .set("auc", auc);
        emit_report(&report, path)?;
    }
    Ok(())
}

pub fn fitb(args: &FitbArgs) -> Result<()> {
    let (model, table) = load_pair(&args.checkpoint, &args.embeddings)?;
    let questions = setgnn::data::load_fitb(&args.questions)?;
    let pool = worker_pool(args.workers)?;
    let outcome = model_fitb(&model, &table, &questions, scoring_mode(args.pairwise), pool.as_ref())?;
    println!("fitb_accuracy={}", outcome.accuracy);
    if let Some(path) = &args.report {
        let mut report = Report::new();
        report
            .set("git_describe", GIT_DESCRIBE)
            .set("command", "fitb")
            .set("scoring", if args.pairwise { "pairwise" } else { "full" })
            .set("questions", outcome.total)
            .set("correct", outcome.correct)
            .set("ties", outcome.ties)
            .set("fitb_accuracy", outcome.accuracy);
        emit_report(&report, path)?;
    }
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    if !(args.tolerance > 0.0) {
        return Err(bad_input(format!("tolerance must be positive, got {}", args.tolerance)));
    }
    let options = GradCheckOptions {
        tolerance: args.tolerance,
        ..GradCheckOptions::default()
    };
    let mut failures = Vec::new();
    for variant in [Variant::Centroid, Variant::Learned] {
        let (mut worst, mut redraws) = (0.0f64, 0);
        for seed in 0..args.seeds {
            let check = check_model_gradients(variant, seed, options)?;
            let report = check.report;
            redraws += check.redraws;
            worst = worst.max(report.max_rel_err());
            if !report.passed() {
                log::error!("{variant} seed {seed}:\n{report}");
                failures.push(format!("{variant} seed {seed}"));
            }
        }
        println!(
            "model {variant}: max_rel_err={worst:.3e} over {} seeds ({redraws} draws rejected near kinks)",
            args.seeds
        );
    }
    if failures.is_empty() {
        println!("gradcheck=pass");
        Ok(())
    } else {
        println!("gradcheck=fail");
        Err(CheckFailed(failures.join(", ")).into())
    }
}
