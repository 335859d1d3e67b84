//! Minimal reverse-mode differentiation engine.

mod checkpoint;
mod graph;
mod kernels;
mod optim;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{Gradients, Graph, NodeId, Op, Tensor};
pub use optim::{optimizer_step, AdamConfig, OptimizerState, ParamGrads, ParamSet};

pub(crate) use graph::softmax_columns_in_place;
