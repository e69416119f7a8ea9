//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//!
//! [task]
//! kind = "classification"      # or "fact-edit"
//! input_dim = 16
//! num_classes = 4
//! n_pretrain = 2000
//! n_adapt = 256
//!
//! [pretrain]
//! hidden = 64
//! steps = 2000
//! learning_rate = 0.01
//! batch_size = 64
//!
//! [adapter]
//! rank = 4
//!
//! [train]
//! learning_rate = 0.05
//! beta = 0.8
//! batch_size = 16
//! # edit_alpha = 0.5
//!
//! [train.schedule]
//! sparsity = 0.865             # or final_keep = 0.135
//! t_i = 50
//! t_f = 300
//! total_steps = 400
//! ```
//!
//! `sparsity` is converted to a keep fraction (`1 − sparsity`) on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::derive_seed;
use crate::error::{Error, Result};
use crate::harness::experiments::AdaptRun;
use crate::harness::pretrain::{pretrain_base, PretrainConfig};
use crate::harness::task::{gen_classification_task, gen_fact_edit_task, ClassificationSpec, FactEditSpec, TaskBundle};
use crate::model::Mlp;
use crate::pruner::SparsitySchedule;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskConfig {
    Classification(ClassificationSpec),
    FactEdit(FactEditSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_keep: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    pub t_i: usize,
    pub t_f: usize,
    pub total_steps: usize,
}

impl ScheduleConfig {
    pub fn to_schedule(&self) -> Result<SparsitySchedule> {
        match (self.final_keep, self.sparsity) {
            (Some(keep), None) => SparsitySchedule::new(keep, self.t_i, self.t_f, self.total_steps),
            (None, Some(s)) => SparsitySchedule::from_sparsity(s, self.t_i, self.t_f, self.total_steps),
            _ => Err(Error::Config(
                "schedule needs exactly one of `final_keep` or `sparsity`".into(),
            )),
        }
    }
}

fn default_beta() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_alpha: Option<f64>,
    /// Mini-batch seed; derived from the top-level seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub schedule: ScheduleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub grid: Vec<f64>,
    pub rank: usize,
    pub d1: usize,
    pub d2: usize,
    pub trials: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            grid: vec![0.0, 0.25, 0.5, 0.75, 0.9, 0.95],
            rank: 4,
            d1: 64,
            d2: 64,
            trials: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub fractions: Vec<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            fractions: vec![1.0, 0.5, 0.25, 0.125],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub task: TaskConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    pub adapter: AdapterConfig,
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train_config()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn pretrain_seed(&self) -> u64 {
        derive_seed(&[self.seed, 1])
    }

    pub fn batch_seed(&self) -> u64 {
        self.train.seed.unwrap_or_else(|| derive_seed(&[self.seed, 2]))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.train.learning_rate,
            schedule: self.train.schedule.to_schedule()?,
            beta: self.train.beta,
            edit_alpha: self.train.edit_alpha,
            batch_size: self.train.batch_size,
            seed: self.batch_seed(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn adapt_run(&self) -> Result<AdaptRun> {
        Ok(AdaptRun::new(self.adapter.rank, self.train_config()?))
    }

    pub fn generate_task(&self) -> Result<TaskBundle> {
        match &self.task {
            TaskConfig::Classification(spec) => gen_classification_task(self.seed, spec),
            TaskConfig::FactEdit(spec) => gen_fact_edit_task(self.seed, spec),
        }
    }

    /// Generates the task and pre-trains the base network on it.
    pub fn prepare(&self) -> Result<(TaskBundle, Mlp)> {
        let task = self.generate_task()?;
        let base = pretrain_base(&task, &self.pretrain, self.pretrain_seed())?;
        Ok((task, base))
    }
}

/// Built-in configurations, also shipped as files under `configs/`.
pub mod presets {
    use super::ExperimentConfig;

    pub const FINETUNE: &str = include_str!("../../configs/finetune.toml");
    pub const EDIT: &str = include_str!("../../configs/edit.toml");
    pub const BOUND: &str = include_str!("../../configs/bound.toml");

    pub fn finetune() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(FINETUNE).expect("bundled finetune config is valid")
    }

    pub fn edit() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(EDIT).expect("bundled edit config is valid")
    }

    pub fn bound() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(BOUND).expect("bundled bound config is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3

[task]
kind = "fact-edit"
n_facts = 20
n_edit = 4
key_dim = 6
num_values = 3

[adapter]
rank = 2

[train]
learning_rate = 0.1
batch_size = 4
edit_alpha = 0.5

[train.schedule]
sparsity = 0.95
t_i = 2
t_f = 8
total_steps = 10
"#;

    #[test]
    fn parses_and_converts_sparsity() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let t = cfg.train_config().unwrap();
        assert!((t.schedule.final_keep() - 0.05).abs() < 1e-15);
        assert_eq!(t.beta, 0.8);
        assert_eq!(t.edit_alpha, Some(0.5));
        assert!(matches!(cfg.task, TaskConfig::FactEdit(_)));
        assert_eq!(cfg.pretrain, PretrainConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_both_keep_and_sparsity() {
        let text = MINIMAL.replace("sparsity = 0.95", "sparsity = 0.95\nfinal_keep = 0.05");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = MINIMAL.replace("batch_size = 4", "batch_size = 4\nmomentum = 0.9");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn seed_override_changes_derived_seeds() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let other = cfg.clone().with_seed(4);
        assert_ne!(cfg.batch_seed(), other.batch_seed());
        assert_ne!(cfg.pretrain_seed(), other.pretrain_seed());
    }

    #[test]
    fn presets_parse() {
        presets::finetune();
        presets::edit();
        presets::bound();
    }
}
