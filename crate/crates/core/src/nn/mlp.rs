use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::init::xavier_uniform;
use crate::nn::registry::{ParamId, ParamRegistry};

/// Stack of affine layers with ReLU between them and a single linear output.
#[derive(Clone, Debug)]
pub struct MlpHead {
    layers: Vec<(ParamId, ParamId)>,
    input: usize,
}

impl MlpHead {
    /// `depth` affine layers: `input -> hidden -> ... -> hidden -> 1`.
    pub fn new<R: Rng + ?Sized>(
        registry: &mut ParamRegistry,
        prefix: &str,
        group: &str,
        input: usize,
        hidden: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Contract("an MLP needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(depth);
        let mut width = input;
        for i in 0..depth {
            let out = if i + 1 == depth { 1 } else { hidden };
            let w = registry.register(&format!("{prefix}.{i}.w"), group, xavier_uniform(width, out, rng))?;
            let b = registry.register(&format!("{prefix}.{i}.b"), group, Tensor::zeros(&[out]))?;
            layers.push((w, b));
            width = out;
        }
        Ok(MlpHead { layers, input })
    }

    pub fn attach(registry: &ParamRegistry, prefix: &str, depth: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(depth);
        for i in 0..depth {
            let find = |n: String| {
                registry
                    .id(&n)
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{n}`")))
            };
            layers.push((find(format!("{prefix}.{i}.w"))?, find(format!("{prefix}.{i}.b"))?));
        }
        let input = registry.value(layers[0].0).shape()[0];
        Ok(MlpHead { layers, input })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn layer(&self, i: usize) -> (ParamId, ParamId) {
        self.layers[i]
    }

    /// Maps `x` (`[n, input]`) to one pre-sigmoid output per row (`[n, 1]`).
    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let s = tape.shape(x);
        if s.len() != 2 || s[1] != self.input {
            return Err(Error::dim("mlp_forward", s, &[self.input]));
        }
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let a = tape.matmul(h, params[w.0])?;
            h = tape.add_row(a, params[b.0])?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}
