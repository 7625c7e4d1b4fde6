use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which scoring head and edge function a model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Absolute-difference edges; scores by spread around the centroid of
    /// the normalized final states; trained with the generalized contrastive
    /// loss. ("Model I")
    Centroid,
    /// Learned edges; scores the mean final state with an MLP; trained with
    /// binary cross-entropy. ("Model II")
    Learned,
}

impl Variant {
    pub fn code(self) -> u8 {
        match self {
            Variant::Centroid => 1,
            Variant::Learned => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Variant::Centroid),
            2 => Ok(Variant::Learned),
            other => Err(Error::Checkpoint(format!("unknown model variant {other}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Centroid => "I",
            Variant::Learned => "II",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" | "centroid" => Ok(Variant::Centroid),
            "ii" | "2" | "learned" => Ok(Variant::Learned),
            other => Err(Error::Data(format!("unknown model variant `{other}` (expected I or II)"))),
        }
    }
}

pub const DEFAULT_DIM: usize = 32;
pub const DEFAULT_STEPS: usize = 3;
pub const DEFAULT_MLP_DEPTH: usize = 3;
pub const DEFAULT_MARGIN: f64 = 50.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Node state size `L`; equals the item embedding size.
    pub state_dim: usize,
    /// Message size `M`.
    pub message_dim: usize,
    /// Edge feature size `J`; must equal `state_dim` for [`Variant::Centroid`].
    pub edge_dim: usize,
    /// Message-passing rounds `K`.
    pub steps: usize,
    /// Number of MLP layers `Q` ([`Variant::Learned`] only).
    pub mlp_depth: usize,
    pub mlp_hidden: usize,
    /// Contrastive margin `m` ([`Variant::Centroid`] only).
    pub margin: f64,
    /// Standardize final states before scoring.
    pub normalization: bool,
}

impl ModelConfig {
    pub fn new(variant: Variant, state_dim: usize) -> Self {
        ModelConfig {
            variant,
            state_dim,
            message_dim: DEFAULT_DIM,
            edge_dim: state_dim,
            steps: DEFAULT_STEPS,
            mlp_depth: DEFAULT_MLP_DEPTH,
            mlp_hidden: DEFAULT_DIM,
            margin: DEFAULT_MARGIN,
            normalization: variant == Variant::Centroid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(msg));
        if self.steps == 0 {
            return bad("message passing needs at least one step (K >= 1)".into());
        }
        if self.state_dim == 0 || self.message_dim == 0 || self.edge_dim == 0 {
            return bad("model dimensions must be positive".into());
        }
        match self.variant {
            Variant::Centroid => {
                if !(self.margin > 0.0) || !self.margin.is_finite() {
                    return bad(format!("margin must be positive, got {}", self.margin));
                }
                if self.edge_dim != self.state_dim {
                    return bad(format!(
                        "absolute-difference edges need edge_dim == state_dim ({} != {})",
                        self.edge_dim, self.state_dim
                    ));
                }
            }
            Variant::Learned => {
                if self.mlp_depth == 0 || self.mlp_hidden == 0 {
                    return bad("the MLP head needs at least one layer of positive width".into());
                }
            }
        }
        Ok(())
    }
}
