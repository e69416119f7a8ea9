//! The sparse low-rank training loop.
//!
//! One step, in order:
//!
//! 1. forward/backward through the adapted model;
//! 2. instantaneous sensitivity `|θ ⊙ ∇θ|` from the pre-update factors;
//! 3. moving-average update of those scores;
//! 4. plain SGD on `A` and `B`;
//! 5. per-row (`A`) / per-column (`B`) top-k pruning at the scheduled keep
//!    fraction;
//! 6. optionally, Frobenius clipping of both factors to `‖·‖²_F ≤ α`.
//!
//! Pruned entries are zeroed but still receive gradients, so an entry can
//! re-enter the kept set at a later step when its score rises.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::model::LoraMlp;
use crate::pruner::{prune_adapter, SparsitySchedule};
use crate::sensitivity::{instantaneous_sensitivity, SensitivityState};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub schedule: SparsitySchedule,
    /// Smoothing factor for the sensitivity moving average.
    pub beta: f64,
    /// Bound on `‖A‖²_F` and `‖B‖²_F`; `None` leaves the norms free.
    pub edit_alpha: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(contract(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(alpha) = self.edit_alpha {
            if !(alpha > 0.0) {
                return Err(contract(format!("edit_alpha must be positive, got {alpha}")));
            }
        }
        if self.batch_size == 0 {
            return Err(contract("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(contract(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.schedule.total_steps()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    /// Mini-batch loss before the update.
    pub loss: f64,
    pub keep_fraction: f64,
    /// Zero fraction of all layer updates together, after the step.
    pub delta_sparsity: f64,
    /// Largest `‖A‖²_F` over the adapted layers, after the step.
    pub a_frob_sq: f64,
    /// Largest `‖B‖²_F` over the adapted layers, after the step.
    pub b_frob_sq: f64,
}

/// Adapted model plus one sensitivity state per layer.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub model: LoraMlp,
    pub sensitivity: Vec<SensitivityState>,
    /// Number of completed steps.
    pub step: usize,
}

impl std::fmt::Debug for TrainState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let shapes: Vec<_> = self.model.layers().iter().map(|l| (l.dims(), l.rank())).collect();
        f.debug_struct("TrainState")
            .field("step", &self.step)
            .field("layers", &shapes)
            .finish_non_exhaustive()
    }
}

impl TrainState {
    pub fn new(model: LoraMlp, beta: f64) -> Result<Self> {
        let sensitivity = model
            .layers()
            .iter()
            .map(|l| SensitivityState::new(l, beta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            sensitivity,
            step: 0,
        })
    }
}

/// Scales `m` down to `‖m‖²_F = alpha` when it exceeds `alpha`; otherwise
/// returns it unchanged.
pub fn clip_frobenius(m: &Matrix, alpha: f64) -> Matrix {
    let norm_sq = m.frobenius_sq();
    if norm_sq <= alpha {
        return m.clone();
    }
    m.scale(alpha.sqrt() / norm_sq.sqrt())
}

/// Runs one training step on a mini-batch (`inputs` is features × samples).
///
/// A non-finite loss is reported before anything is modified.
pub fn roselora_step(
    state: &mut TrainState,
    cfg: &TrainConfig,
    inputs: &Matrix,
    labels: &[usize],
    t: usize,
) -> Result<StepReport> {
    let keep = cfg.schedule.keep_fraction_at(t)?;
    if state.sensitivity.len() != state.model.layers().len() {
        return Err(contract("one sensitivity state per adapted layer is required"));
    }
    let (loss, grads) = state.model.loss_and_grads(inputs, labels)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { step: t, loss });
    }

    for ((layer, scores), grad) in state
        .model
        .layers
        .iter_mut()
        .zip(state.sensitivity.iter_mut())
        .zip(&grads)
    {
        let inst_a = instantaneous_sensitivity(layer.a(), &grad.a)?;
        let inst_b = instantaneous_sensitivity(layer.b(), &grad.b)?;
        scores.update(&inst_a, &inst_b)?;

        layer.a.axpy_in_place(-cfg.learning_rate, &grad.a)?;
        layer.b.axpy_in_place(-cfg.learning_rate, &grad.b)?;

        prune_adapter(layer, scores, keep)?;

        if let Some(alpha) = cfg.edit_alpha {
            layer.a = clip_frobenius(&layer.a, alpha);
            layer.b = clip_frobenius(&layer.b, alpha);
        }
    }
    state.step = t;

    let layers = state.model.layers();
    Ok(StepReport {
        step: t,
        loss,
        keep_fraction: keep,
        delta_sparsity: state.model.delta_sparsity(),
        a_frob_sq: layers.iter().map(|l| l.a().frobenius_sq()).fold(0.0, f64::max),
        b_frob_sq: layers.iter().map(|l| l.b().frobenius_sq()).fold(0.0, f64::max),
    })
}

/// Seeded mini-batch order: shuffle, walk the permutation in chunks, and
/// reshuffle once fewer than a full batch remains.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self {
            rng,
            order,
            cursor: 0,
            batch: batch_size.min(n).max(1),
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        out
    }
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub reports: Vec<StepReport>,
}

/// Runs `cfg.total_steps()` steps on `(inputs, labels)` with seeded
/// mini-batches. On a non-finite loss the run stops and the error carries
/// the state from the last finite step.
pub fn train(model: LoraMlp, inputs: &Matrix, labels: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let state = TrainState::new(model, cfg.beta)?;
    train_from(state, inputs, labels, cfg)
}

/// Like [`train`], starting from an existing state.
pub fn train_from(state: TrainState, inputs: &Matrix, labels: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_steps(state, inputs, labels, cfg, cfg.total_steps())
}

/// Runs the first `steps` steps of the schedule (capped at its length).
pub fn train_steps(
    mut state: TrainState,
    inputs: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
    steps: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if labels.is_empty() || inputs.cols() != labels.len() {
        return Err(contract(format!(
            "training data needs one label per input column, got {} columns and {} labels",
            inputs.cols(),
            labels.len()
        )));
    }
    let mut sampler = BatchSampler::new(labels.len(), cfg.batch_size, cfg.seed);
    let steps = steps.min(cfg.total_steps());
    let mut reports = Vec::with_capacity(steps);
    for t in 1..=steps {
        let idx = sampler.next_batch();
        let x = inputs.select_cols(&idx);
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        match roselora_step(&mut state, cfg, &x, &y, t) {
            Ok(report) => reports.push(report),
            Err(Error::NonFiniteLoss { step, loss }) => {
                return Err(Error::Diverged {
                    step,
                    loss,
                    last_good: Box::new(state),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainOutcome { state, reports })
}
