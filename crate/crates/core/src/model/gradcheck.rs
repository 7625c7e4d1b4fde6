use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_diff_check, GradCheckOptions, GradCheckReport, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{stack_graphs, BatchLayout, CompatModel, ModelConfig, SetGraph, Variant};
use crate::nn::NormMode;

/// Toy configuration for gradient checks: every width 5, two propagation
/// steps, a two-layer head and a margin small enough to keep losses O(1).
pub fn toy_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        message_dim: 5,
        edge_dim: 5,
        steps: 2,
        mlp_depth: 2,
        mlp_hidden: 5,
        margin: 2.0,
        ..ModelConfig::new(variant, 5)
    }
}

/// Draws closer than this many finite-difference steps to a ReLU or
/// absolute-value kink are redrawn.
pub const KINK_MARGIN_STEPS: f64 = 100.0;
const MAX_DRAWS: usize = 100;

#[derive(Clone, Debug)]
pub struct ModelGradCheck {
    pub report: GradCheckReport,
    /// Draws rejected for lying too close to a kink.
    pub redraws: usize,
    /// Distance from the accepted draw to its nearest kink.
    pub kink_distance: f64,
}

struct Draw {
    model: CompatModel,
    leaves: Vec<(String, Tensor)>,
    layout: BatchLayout,
}

const LABELS: [f64; 3] = [1.0, 0.0, 1.0];

fn draw(variant: Variant, rng: &mut ChaCha8Rng) -> Result<Draw> {
    let mut model = CompatModel::new(toy_config(variant), rng.random())?;
    for p in model.registry_mut().iter_mut() {
        if p.name.ends_with(".b") || p.name.contains(".b_") {
            let data = (0..p.value.len()).map(|_| rng.random_range(0.01..0.1)).collect();
            p.value = Tensor::new(p.value.shape().to_vec(), data)?;
        }
    }
    let graphs = (0..LABELS.len())
        .map(|_| {
            let n = rng.random_range(3..=5);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            SetGraph::from_rows(&rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&SetGraph> = graphs.iter().collect();
    let (input, layout) = stack_graphs(&refs)?;
    let mut leaves: Vec<(String, Tensor)> = model
        .registry()
        .iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    leaves.push(("input".into(), input));
    Ok(Draw { model, leaves, layout })
}

fn loss(d: &Draw, tape: &mut Tape, v: &[Var]) -> Result<Var> {
    let n = d.leaves.len() - 1;
    Ok(d.model.loss(tape, &v[..n], v[n], &d.layout, &LABELS, NormMode::Train)?.0)
}

fn kink_distance(d: &Draw) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = d.leaves.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    loss(d, &mut tape, &vars)?;
    Ok(tape.kink_distance())
}

/// Compares the analytic gradient of the training loss with central
/// differences for every parameter and every input embedding, on a batch of
/// three random graphs of 3 to 5 nodes with small positive biases.
///
/// Central differences do not estimate a derivative across a kink, so a draw
/// with any ReLU or `abs` input within `KINK_MARGIN_STEPS * step` of zero is
/// replaced by a fresh one from the same stream.
pub fn check_model_gradients(variant: Variant, seed: u64, options: GradCheckOptions) -> Result<ModelGradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = KINK_MARGIN_STEPS * options.step;
    for redraws in 0..MAX_DRAWS {
        let d = draw(variant, &mut rng)?;
        let kink = kink_distance(&d)?;
        if kink < margin {
            continue;
        }
        let report = finite_diff_check(|tape, v| loss(&d, tape, v), &d.leaves, options)?;
        return Ok(ModelGradCheck {
            report,
            redraws,
            kink_distance: kink,
        });
    }
    Err(Error::Contract(format!(
        "no draw in {MAX_DRAWS} attempts kept every kink farther than {margin:e}"
    )))
}
