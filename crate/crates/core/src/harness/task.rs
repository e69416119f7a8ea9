//! Synthetic tasks for the toy fine-tuning and editing experiments.
//!
//! Every sample carries a trailing constant feature `1.0` so bias-free
//! layers can still learn offsets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::derive_seed;
use crate::error::{contract, Result};
use crate::model::{argmax_cols, Mlp};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Classification,
    FactEdit,
}

/// Labelled samples, stored sample-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl Split {
    pub fn new(dim: usize, samples: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(contract("one label per sample is required"));
        }
        if samples.iter().any(|s| s.len() != dim) {
            return Err(contract(format!("every sample must have {dim} features")));
        }
        Ok(Self {
            dim,
            data: samples.concat(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Inputs as a `features × samples` matrix; `None` for an empty split.
    pub fn inputs(&self) -> Option<Matrix> {
        if self.is_empty() {
            return None;
        }
        Some(Matrix::from_fn(self.dim, self.len(), |f, s| {
            self.data[s * self.dim + f]
        }))
    }

    /// The samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Split {
        Split {
            dim: self.dim,
            data: idx.iter().flat_map(|&i| self.sample(i).iter().copied()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Hidden labelling network: MLP logits plus per-class offsets tuned so the
/// classes are roughly balanced on the pre-training distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Teacher {
    net: Mlp,
    offsets: Vec<f64>,
}

impl Teacher {
    pub fn label(&self, x: &Matrix) -> Result<Vec<usize>> {
        let mut logits = self.net.logits(x)?;
        for j in 0..logits.cols() {
            for (c, off) in self.offsets.iter().enumerate() {
                logits.set(c, j, logits.get(c, j) + off);
            }
        }
        Ok(argmax_cols(&logits))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBundle {
    pub kind: TaskKind,
    pub seed: u64,
    pub num_classes: usize,
    /// What the base model is pre-trained on.
    pub pretrain: Split,
    /// What the adapter is trained on.
    pub adapt: Split,
    /// Where adaptation quality is measured. For fact editing this is the
    /// edited facts themselves.
    pub adapt_eval: Split,
    /// Items whose behaviour should survive adaptation.
    pub locality: Split,
    pub teacher: Option<Teacher>,
}

impl TaskBundle {
    /// Input features per sample, including the constant feature.
    pub fn features(&self) -> usize {
        self.pretrain.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationSpec {
    pub input_dim: usize,
    pub num_classes: usize,
    pub n_pretrain: usize,
    pub n_adapt: usize,
    /// Size of the held-out adaptation and locality splits.
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    /// Distance of the adaptation distribution's mean from the origin.
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default = "default_teacher_hidden")]
    pub teacher_hidden: usize,
}

fn default_n_eval() -> usize {
    1000
}

fn default_shift() -> f64 {
    2.5
}

fn default_teacher_hidden() -> usize {
    32
}

impl ClassificationSpec {
    pub fn new(input_dim: usize, num_classes: usize, n_pretrain: usize, n_adapt: usize) -> Self {
        Self {
            input_dim,
            num_classes,
            n_pretrain,
            n_adapt,
            n_eval: default_n_eval(),
            shift: default_shift(),
            teacher_hidden: default_teacher_hidden(),
        }
    }
}

fn gaussian_samples<R: Rng + ?Sized>(n: usize, mean: &[f64], rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut s: Vec<f64> = mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect();
            s.push(1.0);
            s
        })
        .collect()
}

fn labelled(teacher: &Teacher, dim: usize, samples: Vec<Vec<f64>>) -> Result<Split> {
    let labels = match samples.is_empty() {
        true => Vec::new(),
        false => {
            let split = Split::new(dim, samples.clone(), vec![0; samples.len()])?;
            teacher.label(&split.inputs().expect("nonempty"))?
        }
    };
    Split::new(dim, samples, labels)
}

/// Classification task labelled by a seeded teacher network.
///
/// Pre-training and locality samples come from `N(0, I)`; adaptation samples
/// from `N(μ, I)` with `‖μ‖ = spec.shift` along a random direction.
pub fn gen_classification_task(seed: u64, spec: &ClassificationSpec) -> Result<TaskBundle> {
    if spec.input_dim == 0 || spec.num_classes < 2 || spec.n_pretrain == 0 || spec.n_adapt == 0 || spec.n_eval == 0 {
        return Err(contract(
            "classification task dimensions must be positive (and at least two classes)",
        ));
    }
    let dim = spec.input_dim + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xC1A5]));

    let net = Mlp::random(&[dim, spec.teacher_hidden, spec.num_classes], &mut rng)?;
    let mut teacher = Teacher {
        net,
        offsets: vec![0.0; spec.num_classes],
    };
    let origin = vec![0.0; spec.input_dim];
    let calib = Split::new(dim, gaussian_samples(4000, &origin, &mut rng), vec![0; 4000])?
        .inputs()
        .expect("nonempty");
    let calib_logits = teacher.net.logits(&calib)?;
    let scale = calib_logits.max_abs().max(1.0);
    for _ in 0..200 {
        let labels = teacher.label(&calib)?;
        let mut freq = vec![0.0; spec.num_classes];
        for l in labels {
            freq[l] += 1.0 / 4000.0;
        }
        let target = 1.0 / spec.num_classes as f64;
        for (off, f) in teacher.offsets.iter_mut().zip(&freq) {
            *off -= 0.5 * scale * (f - target);
        }
    }

    let direction: Vec<f64> = (0..spec.input_dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let shifted: Vec<f64> = direction.iter().map(|v| v / norm * spec.shift).collect();

    let pretrain = labelled(&teacher, dim, gaussian_samples(spec.n_pretrain, &origin, &mut rng))?;
    let adapt = labelled(&teacher, dim, gaussian_samples(spec.n_adapt, &shifted, &mut rng))?;
    let adapt_eval = labelled(&teacher, dim, gaussian_samples(spec.n_eval, &shifted, &mut rng))?;
    let locality = labelled(&teacher, dim, gaussian_samples(spec.n_eval, &origin, &mut rng))?;

    Ok(TaskBundle {
        kind: TaskKind::Classification,
        seed,
        num_classes: spec.num_classes,
        pretrain,
        adapt,
        adapt_eval,
        locality,
        teacher: Some(teacher),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactEditSpec {
    pub n_facts: usize,
    pub n_edit: usize,
    pub key_dim: usize,
    pub num_values: usize,
}

/// Random key vectors mapped to random value classes.
///
/// `pretrain` holds every fact with its original value, `adapt` the
/// `n_edit` edited keys with new (always different) values, and `locality`
/// the untouched facts.
pub fn gen_fact_edit_task(seed: u64, spec: &FactEditSpec) -> Result<TaskBundle> {
    if spec.n_edit >= spec.n_facts {
        return Err(contract(format!(
            "n_edit ({}) must be smaller than n_facts ({})",
            spec.n_edit, spec.n_facts
        )));
    }
    if spec.key_dim == 0 || spec.num_values < 2 {
        return Err(contract("fact-edit task needs key_dim >= 1 and at least two values"));
    }
    let dim = spec.key_dim + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xFAC7]));
    let keys = gaussian_samples(spec.n_facts, &vec![0.0; spec.key_dim], &mut rng);
    let values: Vec<usize> = (0..spec.n_facts).map(|_| rng.gen_range(0..spec.num_values)).collect();

    let mut order: Vec<usize> = (0..spec.n_facts).collect();
    order.shuffle(&mut rng);
    let (edited, kept) = order.split_at(spec.n_edit);
    let mut edited = edited.to_vec();
    let mut kept = kept.to_vec();
    edited.sort_unstable();
    kept.sort_unstable();

    let new_values: Vec<usize> = edited
        .iter()
        .map(|&i| (values[i] + rng.gen_range(1..spec.num_values)) % spec.num_values)
        .collect();

    let pretrain = Split::new(dim, keys.clone(), values.clone())?;
    let adapt = Split::new(dim, edited.iter().map(|&i| keys[i].clone()).collect(), new_values)?;
    let locality = pretrain.subset(&kept);

    Ok(TaskBundle {
        kind: TaskKind::FactEdit,
        seed,
        num_classes: spec.num_values,
        pretrain,
        adapt_eval: adapt.clone(),
        adapt,
        locality,
        teacher: None,
    })
}
