//! Experiment harness: synthetic tasks, base pre-training, paired adapter
//! runs, metrics, checkpoints, configuration and CSV output.

pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod pretrain;
pub mod report;
pub mod task;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use config::ExperimentConfig;
pub use experiments::{
    adapt, run_data_scaling, run_edit_experiment, run_finetune, run_forgetting_experiment, AdaptRun, EditMetrics,
    FinetuneMetrics, ScalingRow,
};
pub use task::{
    gen_classification_task, gen_fact_edit_task, ClassificationSpec, FactEditSpec, Split, TaskBundle, TaskKind,
};
