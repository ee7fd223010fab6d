//! Minimal dense-network core.
//!
//! Everything here is 64-bit and batch-first: a batch is an `Array2` with one
//! sample per row. Hidden layers use ReLU, the output layer is either the
//! identity or `tanh`. Gradients are exact (hand-written backprop) and are
//! returned as a [`ParameterSet`] with the same shapes as the parameters.

mod adam;
mod categorical;
mod checkpoint;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use categorical::{entropy, log_softmax, sample, softmax};
pub use checkpoint::{CheckpointMetadata, NetworkCheckpoint, CHECKPOINT_FORMAT};
pub use mlp::{ForwardCache, Linear, Mlp, MlpSpec, OutputActivation, ParameterSet};
