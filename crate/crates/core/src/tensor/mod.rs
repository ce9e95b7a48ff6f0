//! Dense arrays, reverse-mode differentiation, and the Adam optimizer.

mod adam;
pub mod checkpoint;
mod graph;
mod storage;

use alloc::vec::Vec;

pub use adam::{Adam, AdamConfig};
pub use graph::{Graph, Var};
pub use storage::Tensor;

pub(crate) use graph::log_sigmoid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape ({rows}, {cols})")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(&'static str),
    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),
}

#[cfg(test)]
mod tests;
