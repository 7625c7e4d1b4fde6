//! Run configuration: defaults, `key = value` files and flag overrides.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use setgnn::model::{DEFAULT_MARGIN, DEFAULT_MLP_DEPTH, DEFAULT_STEPS};
use setgnn::nn::adam::{BACKBONE_GROUP, BACKBONE_LEARNING_RATE, GNN_GROUP, GNN_LEARNING_RATE};
use setgnn::nn::{AdamConfig, LearningRates};
use setgnn::train::{TrainConfig, DEFAULT_EPOCHS};
use setgnn::{ModelConfig, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub message_dim: usize,
    /// Defaults to the embedding dimension.
    pub edge_dim: Option<usize>,
    pub steps: usize,
    pub mlp_depth: usize,
    pub mlp_hidden: usize,
    pub margin: f64,
    pub lr_gnn: f64,
    pub lr_backbone: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Defaults to 64 for the centroid model and 32 for the learned one.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Defaults to on for the centroid model only.
    pub normalization: Option<bool>,
    pub workers: usize,
    pub embeddings: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        RunConfig {
            variant: Variant::Centroid,
            message_dim: 32,
            edge_dim: None,
            steps: DEFAULT_STEPS,
            mlp_depth: DEFAULT_MLP_DEPTH,
            mlp_hidden: 32,
            margin: DEFAULT_MARGIN,
            lr_gnn: GNN_LEARNING_RATE,
            lr_backbone: BACKBONE_LEARNING_RATE,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            epochs: DEFAULT_EPOCHS,
            batch_size: None,
            seed: 0,
            normalization: None,
            workers: 1,
            embeddings: None,
            train: None,
            val: None,
            checkpoint: None,
            report: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => bail!("{key}: expected on/off, found {value:?}"),
    }
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "variant",
        "message_dim",
        "edge_dim",
        "steps",
        "mlp_depth",
        "mlp_hidden",
        "margin",
        "lr_gnn",
        "lr_backbone",
        "beta1",
        "beta2",
        "epsilon",
        "epochs",
        "batch_size",
        "seed",
        "normalization",
        "workers",
        "embeddings",
        "train",
        "val",
        "checkpoint",
        "report",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "variant" => self.variant = parse(key, value)?,
            "message_dim" => self.message_dim = parse(key, value)?,
            "edge_dim" => self.edge_dim = Some(parse(key, value)?),
            "steps" => self.steps = parse(key, value)?,
            "mlp_depth" => self.mlp_depth = parse(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse(key, value)?,
            "margin" => self.margin = parse(key, value)?,
            "lr_gnn" => self.lr_gnn = parse(key, value)?,
            "lr_backbone" => self.lr_backbone = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            "normalization" => self.normalization = Some(parse_bool(key, value)?),
            "workers" => self.workers = parse(key, value)?,
            "embeddings" => self.embeddings = Some(value.into()),
            "train" => self.train = Some(value.into()),
            "val" => self.val = Some(value.into()),
            "checkpoint" => self.checkpoint = Some(value.into()),
            "report" => self.report = Some(value.into()),
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Applies a `key = value` file; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{source}:{}: expected `key = value`", i + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{source}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn model_config(&self, state_dim: usize) -> ModelConfig {
        ModelConfig {
            message_dim: self.message_dim,
            edge_dim: self.edge_dim.unwrap_or(state_dim),
            steps: self.steps,
            mlp_depth: self.mlp_depth,
            mlp_hidden: self.mlp_hidden,
            margin: self.margin,
            normalization: self.normalization.unwrap_or(self.variant == Variant::Centroid),
            ..ModelConfig::new(self.variant, state_dim)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut rates = LearningRates::uniform(self.lr_gnn);
        rates.groups.insert(GNN_GROUP.to_string(), self.lr_gnn);
        rates.groups.insert(BACKBONE_GROUP.to_string(), self.lr_backbone);
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size.unwrap_or(TrainConfig::for_variant(self.variant).batch_size),
            rates,
            adam: AdamConfig {
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            seed: self.seed,
        }
    }

    /// Effective values of every key, for report echoes.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let train = self.train_config();
        vec![
            ("variant", self.variant.to_string()),
            ("message_dim", self.message_dim.to_string()),
            ("edge_dim", self.edge_dim.map_or("auto".into(), |d| d.to_string())),
            ("steps", self.steps.to_string()),
            ("mlp_depth", self.mlp_depth.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("margin", self.margin.to_string()),
            ("lr_gnn", self.lr_gnn.to_string()),
            ("lr_backbone", self.lr_backbone.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", train.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            (
                "normalization",
                self.normalization.unwrap_or(self.variant == Variant::Centroid).to_string(),
            ),
            ("workers", self.workers.to_string()),
            ("embeddings", path(&self.embeddings)),
            ("train", path(&self.train)),
            ("val", path(&self.val)),
            ("checkpoint", path(&self.checkpoint)),
            ("report", path(&self.report)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_variant() {
        let mut c = RunConfig::default();
        assert_eq!(c.train_config().batch_size, 64);
        assert!(c.model_config(16).normalization);
        c.set("variant", "II").unwrap();
        assert_eq!(c.train_config().batch_size, 32);
        assert!(!c.model_config(16).normalization);
        assert_eq!(c.model_config(16).edge_dim, 16);
        assert_eq!(c.train_config().rates.rate(GNN_GROUP), 4e-5);
        assert_eq!(c.train_config().rates.rate(BACKBONE_GROUP), 4e-6);
    }

    #[test]
    fn file_then_flags_override() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nepochs = 5\n\nlr_gnn=0.01\nnormalization = off\n", "cfg")
            .unwrap();
        assert_eq!((c.epochs, c.lr_gnn, c.normalization), (5, 0.01, Some(false)));
        c.set("epochs", "7").unwrap();
        assert_eq!(c.epochs, 7);
    }

    #[test]
    fn bad_entries_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("epochs 5\n", "cfg").is_err());
        assert!(c.apply_text("nonsense = 1\n", "cfg").is_err());
        assert!(c.apply_text("epochs = many\n", "cfg").is_err());
        assert!(c.apply_text("normalization = maybe\n", "cfg").is_err());
    }

    #[test]
    fn every_key_is_settable_and_echoed() {
        let echoed: Vec<&str> = RunConfig::default().entries().iter().map(|(k, _)| *k).collect();
        assert_eq!(echoed, RunConfig::KEYS);
        for (k, v) in RunConfig::default().entries() {
            let v = if v == "auto" || v == "-" { "3".to_string() } else { v };
            RunConfig::default().set(k, &v).unwrap();
        }
    }
}
