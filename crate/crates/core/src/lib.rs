//! Set-compatibility scoring with message-passing graph neural networks.
//!
//! A set of items is modelled as a complete graph whose node states start
//! from per-item embeddings and are refined by a shared GRU over `K` rounds of
//! message passing. Two scoring heads are provided:
//!
//! * [`model::Variant::Centroid`] uses an absolute-difference edge function and
//!   scores a set by how tightly its normalized node states cluster around
//!   their centroid. It trains with a generalized contrastive loss.
//! * [`model::Variant::Learned`] learns the edge function and scores the mean
//!   node state with an MLP, trained with binary cross-entropy.
//!
//! Everything runs on the small autodiff engine in [`autodiff`].

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod train;

pub use autodiff::{Tape, Tensor, Var};
pub use error::{Error, Result};
pub use model::{CompatModel, ModelConfig, SetGraph, Variant};
