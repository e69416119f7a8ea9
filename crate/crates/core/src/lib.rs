//! Row/column-wise sparse low-rank adaptation.
//!
//! A frozen weight `W°` is adapted as `W° + B·A`, and during training each
//! row of `A` and each column of `B` is pruned to its most sensitive
//! entries. Bounding the per-row / per-column density of the factors bounds
//! the density of the update itself, so only a small, selected part of the
//! weight changes.
//!
//! * [`tensor`]: dense `f64` matrices and reverse-mode gradients.
//! * [`adapter`]: the masked low-rank adapter.
//! * [`sensitivity`]: `|w·∇w|` importance scores with moving-average smoothing.
//! * [`pruner`]: per-row/per-column top-k pruning and the cubic keep schedule.
//! * [`trainer`]: the training step and loop, with optional Frobenius clipping.
//! * [`analysis`]: zero-pattern bounds for low-rank products.
//! * [`harness`]: toy fine-tuning, editing and forgetting experiments.

// `!(x > 0.0)` style checks are deliberate: NaN has to fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapter;
pub mod analysis;
pub mod error;
pub mod harness;
pub mod model;
pub mod pruner;
pub mod sensitivity;
pub mod tensor;
pub mod trainer;

pub use adapter::LoraAdapter;
pub use error::{Error, Result};
pub use model::{LoraMlp, Mlp};
pub use pruner::{keep_count, prune_adapter, prune_vector, SparsitySchedule};
pub use sensitivity::{instantaneous_sensitivity, SensitivityState};
pub use tensor::{finite_diff_grad, Graph, Matrix};
pub use trainer::{clip_frobenius, roselora_step, train, StepReport, TrainConfig, TrainState};
