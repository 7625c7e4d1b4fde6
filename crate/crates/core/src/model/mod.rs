//! The two set-compatibility models.

mod config;
mod gradcheck;
mod graph;
pub mod ops;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{ModelConfig, Variant, DEFAULT_DIM, DEFAULT_MARGIN, DEFAULT_MLP_DEPTH, DEFAULT_STEPS};
pub use gradcheck::{check_model_gradients, toy_config, ModelGradCheck, KINK_MARGIN_STEPS};
pub use graph::{stack_graphs, BatchLayout, SetGraph};

use crate::autodiff::{logistic, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::adam::GNN_GROUP;
use crate::nn::{
    BatchMoments, BatchNorm, Checkpoint, CheckpointHeader, GruCell, MlpHead, NormMode, NormState, ParamId,
    ParamRegistry,
};
use ops::EdgeFn;

/// Scores of one set. `rank` is the statistic used for AUC and
/// fill-in-the-blank ranking: `-r` for the centroid model, the pre-sigmoid
/// logit for the learned model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetScore {
    /// Compatibility score in `[0, 1]`, higher means more compatible.
    pub score: f64,
    /// Mean squared distance to the centroid (centroid model only).
    pub spread: Option<f64>,
    /// `sigmoid(spread)` (centroid model only).
    pub sigmoid_spread: Option<f64>,
    /// MLP output before the sigmoid (learned model only).
    pub logit: Option<f64>,
    pub rank: f64,
}

impl SetScore {
    fn from_head(variant: Variant, head: f64) -> Self {
        match variant {
            Variant::Centroid => {
                let (score, sig) = ops::spread_score(head);
                SetScore {
                    score,
                    spread: Some(head),
                    sigmoid_spread: Some(sig),
                    logit: None,
                    rank: -head,
                }
            }
            Variant::Learned => SetScore {
                score: logistic(head),
                spread: None,
                sigmoid_spread: None,
                logit: Some(head),
                rank: head,
            },
        }
    }

    fn mean(scores: &[SetScore]) -> SetScore {
        let n = scores.len() as f64;
        let avg = |f: &dyn Fn(&SetScore) -> Option<f64>| -> Option<f64> {
            scores.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
        };
        SetScore {
            score: scores.iter().map(|s| s.score).sum::<f64>() / n,
            spread: avg(&|s| s.spread),
            sigmoid_spread: avg(&|s| s.sigmoid_spread),
            logit: avg(&|s| s.logit),
            rank: scores.iter().map(|s| s.rank).sum::<f64>() / n,
        }
    }
}

/// Output of a forward pass over a batch.
#[derive(Debug)]
pub struct Forward {
    /// Node states after `K` rounds of message passing (`[T, L]`).
    pub final_states: Var,
    /// States fed to the scoring head (normalized when enabled).
    pub readout: Var,
    /// Per-graph head output (`[G, 1]`): centroid spread or MLP logit.
    pub head: Var,
    pub moments: Option<BatchMoments>,
}

/// Loss and parameter gradients of one batch.
#[derive(Debug)]
pub struct BatchGradients {
    pub loss: f64,
    /// One tensor per registry parameter, in registry order.
    pub grads: Vec<Tensor>,
    pub moments: Option<BatchMoments>,
}

#[derive(Clone, Debug)]
pub struct CompatModel {
    config: ModelConfig,
    registry: ParamRegistry,
    gru: GruCell,
    message: (ParamId, ParamId),
    edge: Option<(ParamId, ParamId)>,
    norm: Option<BatchNorm>,
    norm_state: Option<NormState>,
    mlp: Option<MlpHead>,
}

impl CompatModel {
    /// Fresh model with Xavier-initialized weights and zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut registry = ParamRegistry::new();
        let (l, m, j) = (config.state_dim, config.message_dim, config.edge_dim);
        let gru = GruCell::new(&mut registry, "gru", GNN_GROUP, m, l, &mut rng)?;
        let message = (
            registry.register("message.w", GNN_GROUP, crate::nn::xavier_uniform(l + j, m, &mut rng))?,
            registry.register("message.b", GNN_GROUP, Tensor::zeros(&[m]))?,
        );
        let edge = match config.variant {
            Variant::Centroid => None,
            Variant::Learned => Some((
                registry.register("edge.w", GNN_GROUP, crate::nn::xavier_uniform(2 * l, j, &mut rng))?,
                registry.register("edge.b", GNN_GROUP, Tensor::zeros(&[j]))?,
            )),
        };
        let norm = if config.normalization {
            Some(BatchNorm::new(&mut registry, "norm", GNN_GROUP, l)?)
        } else {
            None
        };
        let mlp = match config.variant {
            Variant::Centroid => None,
            Variant::Learned => Some(MlpHead::new(
                &mut registry,
                "mlp",
                GNN_GROUP,
                l,
                config.mlp_hidden,
                config.mlp_depth,
                &mut rng,
            )?),
        };
        Ok(CompatModel {
            norm_state: norm.as_ref().map(|_| NormState::new(l)),
            config,
            registry,
            gru,
            message,
            edge,
            norm,
            mlp,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn registry(&self) -> &ParamRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut ParamRegistry {
        &mut self.registry
    }

    pub fn norm_state(&self) -> Option<&NormState> {
        self.norm_state.as_ref()
    }

    pub fn gru(&self) -> &GruCell {
        &self.gru
    }

    pub fn mlp(&self) -> Option<&MlpHead> {
        self.mlp.as_ref()
    }

    /// Parameter ids of the message transform `(W_m, b_m)`.
    pub fn message_params(&self) -> (ParamId, ParamId) {
        self.message
    }

    /// Parameter ids of the learned edge function `(W_e, b_e)`, if any.
    pub fn edge_params(&self) -> Option<(ParamId, ParamId)> {
        self.edge
    }

    pub fn norm(&self) -> Option<&BatchNorm> {
        self.norm.as_ref()
    }

    /// Folds training-batch moments into the running normalization state.
    pub fn apply_moments(&mut self, moments: &BatchMoments) {
        if let Some(state) = &mut self.norm_state {
            state.update(moments);
        }
    }

    fn edge_fn(&self, params: &[Var]) -> EdgeFn {
        match self.edge {
            None => EdgeFn::AbsDiff,
            Some((w, b)) => EdgeFn::Learned {
                w: params[w.index()],
                b: params[b.index()],
            },
        }
    }

    /// `K` synchronous rounds: every message of round `k` is computed from
    /// the states of round `k - 1`, then every node takes one GRU step.
    pub fn propagate(&self, tape: &mut Tape, params: &[Var], input: Var, layout: &BatchLayout) -> Result<Var> {
        let s = tape.shape(input);
        if s.len() != 2 || s[0] != layout.num_nodes() || s[1] != self.config.state_dim {
            return Err(Error::dim("propagate", s, &[layout.num_nodes(), self.config.state_dim]));
        }
        let edge = self.edge_fn(params);
        let (w_m, b_m) = (params[self.message.0.index()], params[self.message.1.index()]);
        let mut h = input;
        for _ in 0..self.config.steps {
            let m = ops::aggregate_messages(tape, h, layout, edge, w_m, b_m)?;
            h = self.gru.step(tape, params, h, m)?;
        }
        Ok(h)
    }

    /// Message passing followed by the variant's scoring head.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: Var,
        layout: &BatchLayout,
        mode: NormMode,
    ) -> Result<Forward> {
        let final_states = self.propagate(tape, params, input, layout)?;
        let (readout, moments) = match (&self.norm, &self.norm_state) {
            (Some(norm), Some(state)) => norm.forward(tape, params, final_states, state, mode)?,
            _ => (final_states, None),
        };
        let head = match &self.mlp {
            None => ops::centroid_spread(tape, readout, layout)?.1,
            Some(mlp) => {
                let mean = ops::mean_states(tape, readout, layout)?;
                mlp.forward(tape, params, mean)?
            }
        };
        Ok(Forward {
            final_states,
            readout,
            head,
            moments,
        })
    }

    /// Training loss of a batch, averaged over its graphs.
    pub fn loss(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: Var,
        layout: &BatchLayout,
        labels: &[f64],
        mode: NormMode,
    ) -> Result<(Var, Option<BatchMoments>)> {
        let fwd = self.forward(tape, params, input, layout, mode)?;
        let loss = match self.config.variant {
            Variant::Centroid => ops::contrastive_loss(tape, fwd.readout, layout, labels, self.config.margin)?,
            Variant::Learned => ops::loss_bce(tape, fwd.head, labels)?,
        };
        Ok((loss, fwd.moments))
    }

    fn labels(graphs: &[&SetGraph]) -> Result<Vec<f64>> {
        graphs
            .iter()
            .map(|g| {
                g.label
                    .map(f64::from)
                    .ok_or_else(|| Error::Contract(format!("set `{}` has no label", g.set_id)))
            })
            .collect()
    }

    fn graphs_gradients(&self, graphs: &[&SetGraph], mode: NormMode) -> Result<BatchGradients> {
        let labels = Self::labels(graphs)?;
        let (input, layout) = stack_graphs(graphs)?;
        let mut tape = Tape::new();
        let params = self.registry.bind(&mut tape);
        let x = tape.constant(input);
        let (loss, moments) = self.loss(&mut tape, &params, x, &layout, &labels, mode)?;
        let loss_value = tape.value(loss).item()?;
        let mut grads = tape.backward(loss)?;
        Ok(BatchGradients {
            loss: loss_value,
            grads: self.registry.collect_grads(&mut grads, &params)?,
            moments,
        })
    }

    /// Mean loss and gradients over `graphs`.
    ///
    /// With normalization on, the batch shares one set of feature statistics
    /// and is differentiated as a whole. Otherwise every graph gets its own
    /// tape (in parallel on `pool` when given) and the per-graph gradients are
    /// summed in batch order, so the result does not depend on the pool size.
    pub fn batch_gradients(
        &self,
        graphs: &[&SetGraph],
        mode: NormMode,
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<BatchGradients> {
        if graphs.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        if self.norm.is_some() {
            return self.graphs_gradients(graphs, mode);
        }
        let per_graph = |g: &&SetGraph| self.graphs_gradients(std::slice::from_ref(g), mode);
        let parts: Vec<BatchGradients> = match pool {
            Some(pool) => pool.install(|| graphs.par_iter().map(per_graph).collect::<Result<Vec<_>>>())?,
            None => graphs.iter().map(per_graph).collect::<Result<Vec<_>>>()?,
        };
        let n = parts.len() as f64;
        let mut iter = parts.into_iter();
        let mut total = iter.next().expect("non-empty batch");
        for part in iter {
            total.loss += part.loss;
            for (acc, g) in total.grads.iter_mut().zip(&part.grads) {
                for (a, &v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += v;
                }
            }
        }
        total.loss /= n;
        for g in &mut total.grads {
            g.data_mut().iter_mut().for_each(|v| *v /= n);
        }
        Ok(total)
    }

    /// Mean loss over `graphs` without touching any state.
    pub fn batch_loss(&self, graphs: &[&SetGraph], mode: NormMode) -> Result<f64> {
        let labels = Self::labels(graphs)?;
        if self.norm.is_none() && graphs.len() > 1 {
            let mut total = 0.0;
            for g in graphs {
                total += self.batch_loss(std::slice::from_ref(g), mode)?;
            }
            return Ok(total / graphs.len() as f64);
        }
        let (input, layout) = stack_graphs(graphs)?;
        let mut tape = Tape::new();
        let params = self.registry.bind(&mut tape);
        let x = tape.constant(input);
        let (loss, _) = self.loss(&mut tape, &params, x, &layout, &labels, mode)?;
        tape.value(loss).item()
    }

    /// Final node states of one graph (`[N, L]`), before normalization.
    pub fn final_states(&self, graph: &SetGraph) -> Result<Tensor> {
        let (input, layout) = stack_graphs(&[graph])?;
        let mut tape = Tape::new();
        let params = self.registry.bind(&mut tape);
        let x = tape.constant(input);
        let h = self.propagate(&mut tape, &params, x, &layout)?;
        Ok(tape.value(h).clone())
    }

    /// Inference-mode score of one set.
    pub fn score(&self, graph: &SetGraph) -> Result<SetScore> {
        if graph.dim() != self.config.state_dim {
            return Err(Error::dim("score", &[graph.dim()], &[self.config.state_dim]));
        }
        let (input, layout) = stack_graphs(&[graph])?;
        let mut tape = Tape::new();
        let params = self.registry.bind(&mut tape);
        let x = tape.constant(input);
        let fwd = self.forward(&mut tape, &params, x, &layout, NormMode::Eval)?;
        Ok(SetScore::from_head(self.config.variant, tape.value(fwd.head).item()?))
    }

    /// Scores many sets; results are in input order whatever the pool size.
    pub fn score_all(&self, graphs: &[SetGraph], pool: Option<&rayon::ThreadPool>) -> Result<Vec<SetScore>> {
        match pool {
            Some(pool) => pool.install(|| graphs.par_iter().map(|g| self.score(g)).collect()),
            None => graphs.iter().map(|g| self.score(g)).collect(),
        }
    }

    /// Mean of the scores of all `N (N - 1) / 2` two-item subsets.
    pub fn score_pairwise_average(&self, graph: &SetGraph) -> Result<SetScore> {
        let n = graph.len();
        let mut scores = Vec::with_capacity(n * (n - 1) / 2);
        for a in 0..n {
            for b in a + 1..n {
                scores.push(self.score(&graph.pair(a, b)?)?);
            }
        }
        Ok(SetScore::mean(&scores))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        Checkpoint {
            header: CheckpointHeader {
                variant: c.variant.code(),
                state_dim: c.state_dim as u32,
                message_dim: c.message_dim as u32,
                edge_dim: c.edge_dim as u32,
                steps: c.steps as u32,
                mlp_depth: c.mlp_depth as u32,
                mlp_hidden: c.mlp_hidden as u32,
                normalization: c.normalization,
                margin: c.margin,
            },
            registry: self.registry.clone(),
            norm: self.norm_state.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let h = &ckpt.header;
        let config = ModelConfig {
            variant: Variant::from_code(h.variant)?,
            state_dim: h.state_dim as usize,
            message_dim: h.message_dim as usize,
            edge_dim: h.edge_dim as usize,
            steps: h.steps as usize,
            mlp_depth: h.mlp_depth as usize,
            mlp_hidden: h.mlp_hidden as usize,
            margin: h.margin,
            normalization: h.normalization,
        };
        config.validate()?;
        // Shapes must agree with a freshly built model of the same config.
        let reference = CompatModel::new(config.clone(), 0)?;
        if reference.registry.len() != ckpt.registry.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                reference.registry.len(),
                ckpt.registry.len()
            )));
        }
        for (want, got) in reference.registry.iter().zip(ckpt.registry.iter()) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        if config.normalization != ckpt.norm.is_some()
            || ckpt.norm.as_ref().is_some_and(|n| n.dim() != config.state_dim)
        {
            return Err(Error::Checkpoint("normalization state does not match header".into()));
        }
        Ok(CompatModel {
            registry: ckpt.registry,
            norm_state: ckpt.norm,
            ..reference
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        CompatModel::from_checkpoint(Checkpoint::load(path)?)
    }
}
