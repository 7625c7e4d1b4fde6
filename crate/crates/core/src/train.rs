//! Mini-batch training with Adam and validation-based model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{model_auc, ScoringMode};
use crate::model::{CompatModel, SetGraph, Variant};
use crate::nn::{adam_step, AdamConfig, LearningRates, NormMode};

pub const DEFAULT_EPOCHS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub rates: LearningRates,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for a variant: 60 epochs, batches of 64 (centroid) or 32
    /// (learned), the default learning rates.
    pub fn for_variant(variant: Variant) -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: match variant {
                Variant::Centroid => 64,
                Variant::Learned => 32,
            },
            rates: LearningRates::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean batch loss over the epoch, weighted by batch size.
    pub train_loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation AUC, or from the
    /// last epoch when no validation AUC is available.
    pub best: CompatModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Thread pool for `workers > 1`; `None` runs everything on the caller's
/// thread. Results never depend on the worker count.
pub fn worker_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::Contract(format!("cannot start {workers} workers: {e}")))
}

fn check_labels(graphs: &[SetGraph]) -> Result<()> {
    match graphs.iter().position(|g| g.label.is_none()) {
        Some(i) => Err(Error::Contract(format!("training graph {i} has no label"))),
        None => Ok(()),
    }
}

/// Runs one epoch over `train` in a shuffled order and returns the mean loss.
pub fn train_epoch(
    model: &mut CompatModel,
    train: &[SetGraph],
    config: &TrainConfig,
    epoch: usize,
    rng: &mut ChaCha8Rng,
    pool: Option<&rayon::ThreadPool>,
) -> Result<f64> {
    if config.batch_size == 0 {
        return Err(Error::Contract("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let batch: Vec<&SetGraph> = chunk.iter().map(|&i| &train[i]).collect();
        let grads = model.batch_gradients(&batch, NormMode::Train, pool)?;
        let finite = grads.loss.is_finite() && grads.grads.iter().all(|g| g.is_finite());
        if !finite {
            return Err(Error::Divergence {
                epoch,
                batch: b,
                loss: grads.loss,
            });
        }
        adam_step(model.registry_mut(), &grads.grads, &config.rates, config.adam)?;
        if let Some(m) = &grads.moments {
            model.apply_moments(m);
        }
        total += grads.loss * batch.len() as f64;
    }
    Ok(total / train.len() as f64)
}

/// Trains `model` for `config.epochs` epochs and keeps the parameters with
/// the best validation AUC.
pub fn train(
    mut model: CompatModel,
    train: &[SetGraph],
    val: &[SetGraph],
    config: &TrainConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Data("empty training corpus".into()));
    }
    check_labels(train)?;
    check_labels(val)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, CompatModel)> = None;

    for epoch in 1..=config.epochs {
        let train_loss = train_epoch(&mut model, train, config, epoch, &mut rng, pool)?;
        let val_auc = match model_auc(&model, val, ScoringMode::Full, pool) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}{}",
            val_auc.map(|a| format!(", val AUC {a:.4}")).unwrap_or_default()
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_auc,
        });
        if let Some(auc) = val_auc {
            if best.as_ref().is_none_or(|(b, _, _)| auc > *b) {
                best = Some((auc, epoch, model.clone()));
            }
        }
    }
    let (best_epoch, best) = match best {
        Some((_, epoch, m)) => (epoch, m),
        None => (config.epochs, model),
    };
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::model::ModelConfig;

    /// Two planted clusters; positives come from one cluster, negatives mix
    /// both.
    fn toy_corpus(seed: u64, count: usize) -> Vec<SetGraph> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
        let noisy = |c: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            centers[c].iter().map(|v| v + rng.random_range(-0.1..0.1)).collect()
        };
        (0..count)
            .map(|i| {
                let n = rng.random_range(3..=5);
                let label = (i % 2) as u8;
                let c0 = rng.random_range(0..2);
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|k| {
                        let c = if label == 1 || k % 2 == 0 { c0 } else { 1 - c0 };
                        noisy(c, &mut rng)
                    })
                    .collect();
                let mut g = SetGraph::from_rows(&rows).unwrap();
                g.label = Some(label);
                g
            })
            .collect()
    }

    fn toy_config(variant: Variant) -> ModelConfig {
        ModelConfig {
            message_dim: 8,
            mlp_hidden: 8,
            steps: 2,
            mlp_depth: 2,
            margin: 2.0,
            ..ModelConfig::new(variant, 4)
        }
    }

    #[test]
    fn one_epoch_decreases_training_loss() {
        for variant in [Variant::Centroid, Variant::Learned] {
            for seed in 0..5 {
                let data = toy_corpus(seed, 64);
                let refs: Vec<&SetGraph> = data.iter().collect();
                let mut model = CompatModel::new(toy_config(variant), seed).unwrap();
                let config = TrainConfig {
                    epochs: 1,
                    batch_size: 8,
                    rates: LearningRates::uniform(1e-3),
                    seed,
                    ..TrainConfig::for_variant(variant)
                };
                let before = model.batch_loss(&refs, NormMode::Train).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                train_epoch(&mut model, &data, &config, 1, &mut rng, None).unwrap();
                let after = model.batch_loss(&refs, NormMode::Train).unwrap();
                assert!(after < before, "{variant} seed {seed}: {before} -> {after}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_worker_independent() {
        let data = toy_corpus(3, 40);
        let (train_set, val_set) = data.split_at(30);
        let model = CompatModel::new(toy_config(Variant::Learned), 1).unwrap();
        let config = TrainConfig {
            epochs: 3,
            batch_size: 8,
            rates: LearningRates::uniform(1e-3),
            seed: 9,
            ..TrainConfig::for_variant(Variant::Learned)
        };
        let a = train(model.clone(), train_set, val_set, &config, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let b = train(model, train_set, val_set, &config, Some(&pool)).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best.registry(), b.best.registry());
    }

    #[test]
    fn best_epoch_tracks_validation_auc() {
        let data = toy_corpus(5, 48);
        let (train_set, val_set) = data.split_at(32);
        let model = CompatModel::new(toy_config(Variant::Centroid), 2).unwrap();
        let config = TrainConfig {
            epochs: 4,
            batch_size: 16,
            rates: LearningRates::uniform(1e-3),
            ..TrainConfig::for_variant(Variant::Centroid)
        };
        let out = train(model, train_set, val_set, &config, None).unwrap();
        let best = out
            .history
            .iter()
            .map(|r| r.val_auc.unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let first_best = out.history.iter().find(|r| r.val_auc == Some(best)).unwrap();
        assert_eq!(out.best_epoch, first_best.epoch);
        let auc = model_auc(&out.best, val_set, ScoringMode::Full, None).unwrap();
        assert_eq!(auc, best);
    }

    #[test]
    fn divergence_is_reported() {
        let data = toy_corpus(1, 8);
        let mut model = CompatModel::new(toy_config(Variant::Learned), 0).unwrap();
        let id = model.registry().id("message.w").unwrap();
        let mut w = model.registry().value(id).clone();
        w.data_mut()[0] = f64::NAN;
        model.registry_mut().set_value(id, w).unwrap();
        let config = TrainConfig {
            epochs: 1,
            ..TrainConfig::for_variant(Variant::Learned)
        };
        let err = train(model, &data, &[], &config, None).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, batch: 0, .. }), "{err}");
    }

    #[test]
    fn unlabeled_training_graphs_are_rejected() {
        let mut data = toy_corpus(1, 4);
        data[2].label = None;
        let model = CompatModel::new(toy_config(Variant::Learned), 0).unwrap();
        let config = TrainConfig::for_variant(Variant::Learned);
        assert!(train(model, &data, &[], &config, None).is_err());
    }
}
