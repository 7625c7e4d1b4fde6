use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::registry::{ParamId, ParamRegistry};

pub const NORM_EPS: f64 = 1e-5;
pub const NORM_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Standardize with the statistics of the rows being processed.
    Train,
    /// Standardize with the running moments.
    Eval,
}

/// Running per-feature moments used in [`NormMode::Eval`].
#[derive(Clone, Debug, PartialEq)]
pub struct NormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl NormState {
    pub fn new(dim: usize) -> Self {
        NormState {
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }

    /// Exponential moving average: `running = 0.9 running + 0.1 batch`.
    pub fn update(&mut self, batch: &BatchMoments) {
        for (r, &b) in self.running_mean.iter_mut().zip(&batch.mean) {
            *r = NORM_MOMENTUM * *r + (1.0 - NORM_MOMENTUM) * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&batch.var) {
            *r = NORM_MOMENTUM * *r + (1.0 - NORM_MOMENTUM) * b;
        }
    }
}

/// Per-feature mean and (biased) variance of one training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Feature-wise standardization with a trainable scale and shift.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    dim: usize,
}

impl BatchNorm {
    pub fn new(registry: &mut ParamRegistry, prefix: &str, group: &str, dim: usize) -> Result<Self> {
        let gamma = registry.register(&format!("{prefix}.gamma"), group, Tensor::full(&[dim], 1.0))?;
        let beta = registry.register(&format!("{prefix}.beta"), group, Tensor::zeros(&[dim]))?;
        Ok(BatchNorm { gamma, beta, dim })
    }

    pub fn attach(registry: &ParamRegistry, prefix: &str) -> Result<Self> {
        let find = |n: String| {
            registry
                .id(&n)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{n}`")))
        };
        let gamma = find(format!("{prefix}.gamma"))?;
        let beta = find(format!("{prefix}.beta"))?;
        Ok(BatchNorm {
            gamma,
            beta,
            dim: registry.value(gamma).len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Normalizes the rows of `states` (`[n, dim]`). In train mode the batch
    /// moments are returned so the caller can fold them into its running state.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        states: Var,
        running: &NormState,
        mode: NormMode,
    ) -> Result<(Var, Option<BatchMoments>)> {
        let s = tape.shape(states);
        if s.len() != 2 || s[1] != self.dim {
            return Err(Error::dim("normalize_states", s, &[self.dim]));
        }
        if s[0] == 0 {
            return Err(Error::Domain("normalize_states needs at least one state".into()));
        }
        let (centered, std, moments) = match mode {
            NormMode::Train => {
                let mean = tape.mean_axis(states, 0)?;
                let centered = tape.sub_row(states, mean)?;
                let sq = tape.mul(centered, centered)?;
                let var = tape.mean_axis(sq, 0)?;
                let moments = BatchMoments {
                    mean: tape.value(mean).data().to_vec(),
                    var: tape.value(var).data().to_vec(),
                };
                let shifted = tape.add_scalar(var, NORM_EPS);
                let std = tape.sqrt(shifted)?;
                (centered, std, Some(moments))
            }
            NormMode::Eval => {
                let mean = tape.constant(Tensor::vector(running.running_mean.clone()));
                let std = tape.constant(Tensor::vector(
                    running.running_var.iter().map(|v| (v + NORM_EPS).sqrt()).collect(),
                ));
                (tape.sub_row(states, mean)?, std, None)
            }
        };
        let unit = tape.div_row(centered, std)?;
        let scaled = tape.mul_row(unit, params[self.gamma.0])?;
        Ok((tape.add_row(scaled, params[self.beta.0])?, moments))
    }
}
