//! Spatiotemporal self-attention for next-location recommendation.
//!
//! The crate is `no_std` (it needs `alloc`) and holds everything that is pure
//! computation: the autodiff engine, interval relation matrices, trajectory
//! splitting, the attention model, training and evaluation, and the planted
//! pattern generator. Parsing, file formats and the command line live in the
//! `stan` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod model;
pub mod relation;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod trajectory;

pub use model::{IntervalMode, MaskMode, ModelConfig, ModelParams};
pub use relation::{CandidateRelation, Gps, IntervalBounds, RelationMatrices};
pub use tensor::{Adam, AdamConfig, Graph, Tensor, Var};
pub use synth::{SynthConfig, SynthData};
pub use train::{EvalReport, TrainConfig, Variant};
pub use trajectory::{CheckIn, Dataset, DatasetStats, TrajectorySequence};
