//! Toy-scale fine-tuning, editing, forgetting and data-size experiments.
//!
//! Every experiment starts from a pre-trained base network, wraps each of
//! its layers in an adapter and trains only the adapters. Paired runs
//! (dense baseline vs. sparse) share the base, the adapter initialisation
//! and the mini-batch order, so they differ only in pruning and clipping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::derive_seed;
use crate::error::{contract, Result};
use crate::harness::task::{Split, TaskBundle, TaskKind};
use crate::model::{accuracy, LoraMlp, Mlp};
use crate::pruner::SparsitySchedule;
use crate::trainer::{train_steps, StepReport, TrainConfig, TrainState};

/// One adapter training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptRun {
    pub rank: usize,
    pub train: TrainConfig,
    /// Stop after this many steps instead of running the whole schedule.
    pub max_steps: Option<usize>,
}

impl AdaptRun {
    pub fn new(rank: usize, train: TrainConfig) -> Self {
        Self {
            rank,
            train,
            max_steps: None,
        }
    }

    /// Same run without pruning or clipping: plain LoRA with SGD.
    pub fn dense_baseline(&self) -> Self {
        Self {
            train: TrainConfig {
                schedule: SparsitySchedule::dense(self.train.total_steps()),
                edit_alpha: None,
                ..self.train.clone()
            },
            ..self.clone()
        }
    }

    pub fn steps(&self) -> usize {
        let total = self.train.total_steps();
        self.max_steps.map_or(total, |m| m.min(total))
    }
}

/// Final state and per-step reports of an adapter run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: TrainState,
    pub reports: Vec<StepReport>,
}

/// Trains adapters on top of `base` using `data`. An empty split or a zero
/// step budget returns the untouched adapters.
pub fn adapt(base: &Mlp, data: &Split, run: &AdaptRun) -> Result<RunResult> {
    let model = LoraMlp::from_base(base, run.rank, derive_seed(&[run.train.seed, 0xADA9]))?;
    let state = TrainState::new(model, run.train.beta)?;
    let steps = run.steps();
    match data.inputs() {
        Some(x) if steps > 0 => {
            let out = train_steps(state, &x, data.labels(), &run.train, steps)?;
            Ok(RunResult {
                state: out.state,
                reports: out.reports,
            })
        }
        _ => {
            run.train.validate()?;
            Ok(RunResult {
                state,
                reports: Vec::new(),
            })
        }
    }
}

fn split_accuracy(model: &LoraMlp, split: &Split) -> Result<f64> {
    match split.inputs() {
        Some(x) => model.accuracy(&x, split.labels()),
        None => Ok(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditMetrics {
    /// Accuracy on the edited facts with their new values.
    pub edit_success: f64,
    /// Share of untouched facts whose prediction is unchanged by the edit.
    pub locality: f64,
}

#[derive(Debug, Clone)]
pub struct EditOutcome {
    pub metrics: EditMetrics,
    pub run: RunResult,
}

/// Edits `task.adapt` into `base` and measures edit success and locality.
/// Locality compares against the base network's own predictions.
pub fn run_edit_experiment(task: &TaskBundle, base: &Mlp, run: &AdaptRun) -> Result<EditOutcome> {
    if task.kind != TaskKind::FactEdit {
        return Err(contract("editing needs a fact-edit task"));
    }
    let result = adapt(base, &task.adapt, run)?;
    let edit_success = split_accuracy(&result.state.model, &task.adapt_eval)?;
    let locality = match task.locality.inputs() {
        Some(x) => accuracy(&result.state.model.predict(&x)?, &base.predict(&x)?),
        None => 1.0,
    };
    Ok(EditOutcome {
        metrics: EditMetrics { edit_success, locality },
        run: result,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneMetrics {
    /// Accuracy on held-out adaptation data before any training.
    pub base_adapt_accuracy: f64,
    /// Accuracy on held-out adaptation data after training.
    pub adapt_accuracy: f64,
    pub pretrain_accuracy_before: f64,
    pub pretrain_accuracy_after: f64,
    /// `pretrain_accuracy_after / pretrain_accuracy_before`.
    pub retention: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub metrics: FinetuneMetrics,
    pub run: RunResult,
}

fn check_classification(task: &TaskBundle) -> Result<()> {
    if task.kind != TaskKind::Classification {
        return Err(contract("fine-tuning needs a classification task"));
    }
    Ok(())
}

/// Fine-tunes on `train_split` and evaluates on the task's held-out splits.
fn finetune_on(task: &TaskBundle, base: &Mlp, train_split: &Split, run: &AdaptRun) -> Result<FinetuneOutcome> {
    check_classification(task)?;
    let result = adapt(base, train_split, run)?;
    let before = LoraMlp::from_base(base, run.rank, 0)?;
    let pretrain_before = split_accuracy(&before, &task.pretrain)?;
    let pretrain_after = split_accuracy(&result.state.model, &task.pretrain)?;
    let retention = if pretrain_before > 0.0 {
        pretrain_after / pretrain_before
    } else {
        1.0
    };
    Ok(FinetuneOutcome {
        metrics: FinetuneMetrics {
            base_adapt_accuracy: split_accuracy(&before, &task.adapt_eval)?,
            adapt_accuracy: split_accuracy(&result.state.model, &task.adapt_eval)?,
            pretrain_accuracy_before: pretrain_before,
            pretrain_accuracy_after: pretrain_after,
            retention,
        },
        run: result,
    })
}

/// Fine-tunes on the whole adaptation split.
pub fn run_finetune(task: &TaskBundle, base: &Mlp, run: &AdaptRun) -> Result<FinetuneOutcome> {
    finetune_on(task, base, &task.adapt, run)
}

/// Returns `(adapt_accuracy, retention)` where retention is post- over
/// pre-fine-tuning accuracy on the pre-training split.
pub fn run_forgetting_experiment(task: &TaskBundle, base: &Mlp, run: &AdaptRun) -> Result<(f64, f64)> {
    let m = run_finetune(task, base, run)?.metrics;
    Ok((m.adapt_accuracy, m.retention))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub fraction: f64,
    pub n_train: usize,
    pub lora_accuracy: f64,
    pub roselora_accuracy: f64,
}

/// Indices of a seeded, nested subsample holding `⌈fraction·n⌉` items,
/// returned in ascending order (so `fraction = 1` is the full split as is).
pub fn subsample_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xDA7A])));
    let keep = ((fraction * n as f64).ceil() as usize).clamp(1.min(n), n);
    let mut idx = order[..keep].to_vec();
    idx.sort_unstable();
    idx
}

/// Trains the dense baseline of `run` and `run` itself on nested subsamples
/// of the adaptation split, one row per fraction.
pub fn run_data_scaling(task: &TaskBundle, base: &Mlp, run: &AdaptRun, fractions: &[f64]) -> Result<Vec<ScalingRow>> {
    check_classification(task)?;
    if let Some(bad) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(contract(format!("fractions must lie in (0, 1], got {bad}")));
    }
    let baseline = run.dense_baseline();
    fractions
        .iter()
        .map(|&fraction| {
            let idx = subsample_indices(task.adapt.len(), fraction, task.seed);
            let subset = task.adapt.subset(&idx);
            let lora = finetune_on(task, base, &subset, &baseline)?;
            let rose = finetune_on(task, base, &subset, run)?;
            Ok(ScalingRow {
                fraction,
                n_train: idx.len(),
                lora_accuracy: lora.metrics.adapt_accuracy,
                roselora_accuracy: rose.metrics.adapt_accuracy,
            })
        })
        .collect()
}
