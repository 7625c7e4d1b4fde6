use std::collections::HashMap;

use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamRegistry`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor together with its Adam moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    /// Learning-rate group.
    pub group: String,
    pub value: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

/// Ordered, uniquely named collection of trainable parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamRegistry {
    params: Vec<Param>,
    index: HashMap<String, usize>,
    step: u64,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, group: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Contract(format!("parameter `{name}` registered twice")));
        }
        let shape = value.shape().to_vec();
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            group: group.to_string(),
            value,
            first_moment: Tensor::zeros(&shape),
            second_moment: Tensor::zeros(&shape),
        });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Restores a parameter with explicit moment buffers (used when loading).
    pub(crate) fn push_param(&mut self, param: Param) -> Result<ParamId> {
        if param.first_moment.shape() != param.value.shape()
            || param.second_moment.shape() != param.value.shape()
        {
            return Err(Error::Checkpoint(format!(
                "moment buffers of `{}` do not match its shape",
                param.name
            )));
        }
        let id = self.register(&param.name, &param.group, param.value.clone())?;
        self.params[id.0] = param;
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of optimizer steps applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::dim("set_value", p.value.shape(), value.shape()));
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of scalar weights.
    pub fn num_weights(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a leaf; the returned vector is indexed by
    /// [`ParamId::index`].
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// Pulls the gradient of every parameter out of `grads`, failing if any
    /// parameter did not take part in the computation.
    pub fn collect_grads(&self, grads: &mut Gradients, bound: &[Var]) -> Result<Vec<Tensor>> {
        self.params
            .iter()
            .zip(bound)
            .map(|(p, &var)| {
                grads.take(var).ok_or_else(|| {
                    Error::Contract(format!("no gradient reached parameter `{}`", p.name))
                })
            })
            .collect()
    }
}
