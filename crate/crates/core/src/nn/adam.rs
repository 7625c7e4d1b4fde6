use std::collections::BTreeMap;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::registry::ParamRegistry;

/// Learning rate of the graph network parameters.
pub const GNN_LEARNING_RATE: f64 = 4e-5;
/// Learning rate of an image backbone, were one attached.
pub const BACKBONE_LEARNING_RATE: f64 = 4e-6;

pub const GNN_GROUP: &str = "gnn";
pub const BACKBONE_GROUP: &str = "backbone";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-group learning rates with a fallback for unlisted groups.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningRates {
    pub default: f64,
    pub groups: BTreeMap<String, f64>,
}

impl LearningRates {
    pub fn uniform(rate: f64) -> Self {
        LearningRates {
            default: rate,
            groups: BTreeMap::new(),
        }
    }

    pub fn rate(&self, group: &str) -> f64 {
        self.groups.get(group).copied().unwrap_or(self.default)
    }
}

impl Default for LearningRates {
    fn default() -> Self {
        let mut groups = BTreeMap::new();
        groups.insert(GNN_GROUP.to_string(), GNN_LEARNING_RATE);
        groups.insert(BACKBONE_GROUP.to_string(), BACKBONE_LEARNING_RATE);
        LearningRates {
            default: GNN_LEARNING_RATE,
            groups,
        }
    }
}

/// One bias-corrected Adam update of every parameter in `registry`.
///
/// `grads` must hold one tensor per parameter, in registry order.
pub fn adam_step(
    registry: &mut ParamRegistry,
    grads: &[Tensor],
    rates: &LearningRates,
    config: AdamConfig,
) -> Result<()> {
    if grads.len() != registry.len() {
        return Err(Error::Contract(format!(
            "adam_step got {} gradients for {} parameters",
            grads.len(),
            registry.len()
        )));
    }
    for (p, g) in registry.iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::dim("adam_step", p.value.shape(), g.shape()));
        }
    }
    let t = registry.step() + 1;
    let bias1 = 1.0 - config.beta1.powi(t as i32);
    let bias2 = 1.0 - config.beta2.powi(t as i32);
    for (p, g) in registry.iter_mut().zip(grads) {
        let lr = rates.rate(&p.group);
        let m = p.first_moment.data_mut();
        let v = p.second_moment.data_mut();
        let w = p.value.data_mut();
        for i in 0..w.len() {
            let gi = g.data()[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    registry.set_step(t);
    Ok(())
}
