use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::init::xavier_uniform;
use crate::nn::registry::{ParamId, ParamRegistry};

/// Gated recurrent unit applied row-wise to a batch of node states.
///
/// ```text
/// z  = sigmoid(m Wz + h Uz + bz)
/// r  = sigmoid(m Wr + h Ur + br)
/// h~ = tanh(m Wh + (r * h) Uh + bh)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    input: usize,
    hidden: usize,
    gates: [Gate; 3],
}

#[derive(Clone, Copy, Debug)]
struct Gate {
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

const UPDATE: usize = 0;
const RESET: usize = 1;
const CANDIDATE: usize = 2;

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        registry: &mut ParamRegistry,
        prefix: &str,
        group: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut gate = |name: &str| -> Result<Gate> {
            Ok(Gate {
                w: registry.register(
                    &format!("{prefix}.w_{name}"),
                    group,
                    xavier_uniform(input, hidden, rng),
                )?,
                u: registry.register(
                    &format!("{prefix}.u_{name}"),
                    group,
                    xavier_uniform(hidden, hidden, rng),
                )?,
                b: registry.register(&format!("{prefix}.b_{name}"), group, Tensor::zeros(&[hidden]))?,
            })
        };
        let gates = [gate("z")?, gate("r")?, gate("h")?];
        Ok(GruCell { input, hidden, gates })
    }

    /// Looks up an existing cell's parameters by name.
    pub fn attach(registry: &ParamRegistry, prefix: &str) -> Result<Self> {
        let find = |n: String| {
            registry
                .id(&n)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{n}`")))
        };
        let gate = |name: &str| -> Result<Gate> {
            Ok(Gate {
                w: find(format!("{prefix}.w_{name}"))?,
                u: find(format!("{prefix}.u_{name}"))?,
                b: find(format!("{prefix}.b_{name}"))?,
            })
        };
        let gates = [gate("z")?, gate("r")?, gate("h")?];
        let w = registry.value(gates[0].w).shape();
        Ok(GruCell {
            input: w[0],
            hidden: w[1],
            gates,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.gates.iter().flat_map(|g| [g.w, g.u, g.b]).collect()
    }

    /// One update of `h_prev` (`[n, hidden]`) given messages `m` (`[n, input]`).
    pub fn step(&self, tape: &mut Tape, params: &[Var], h_prev: Var, m: Var) -> Result<Var> {
        let (sh, sm) = (tape.shape(h_prev).to_vec(), tape.shape(m).to_vec());
        if sh.len() != 2 || sm.len() != 2 || sh[1] != self.hidden || sm[1] != self.input || sh[0] != sm[0] {
            return Err(Error::dim("gru_step", &sh, &sm));
        }
        let affine = |tape: &mut Tape, gate: Gate, h: Var| -> Result<Var> {
            let a = tape.matmul(m, params[gate.w.0])?;
            let b = tape.matmul(h, params[gate.u.0])?;
            let s = tape.add(a, b)?;
            tape.add_row(s, params[gate.b.0])
        };
        let z_pre = affine(tape, self.gates[UPDATE], h_prev)?;
        let z = tape.sigmoid(z_pre);
        let r_pre = affine(tape, self.gates[RESET], h_prev)?;
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, h_prev)?;
        let c_pre = affine(tape, self.gates[CANDIDATE], rh)?;
        let candidate = tape.tanh(c_pre);
        let delta = tape.sub(candidate, h_prev)?;
        let gated = tape.mul(z, delta)?;
        tape.add(h_prev, gated)
    }
}
