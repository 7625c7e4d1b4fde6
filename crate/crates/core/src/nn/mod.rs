//! Trainable building blocks: GRU cell, MLP head, feature normalization,
//! Xavier initialization, Adam, and a named parameter registry that can be
//! checkpointed.

pub mod adam;
pub mod checkpoint;
pub mod gru;
pub mod init;
pub mod mlp;
pub mod norm;
pub mod registry;

pub use adam::{adam_step, AdamConfig, LearningRates};
pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use gru::GruCell;
pub use init::{xavier_init, xavier_uniform};
pub use mlp::MlpHead;
pub use norm::{BatchMoments, BatchNorm, NormMode, NormState};
pub use registry::{Param, ParamId, ParamRegistry};
