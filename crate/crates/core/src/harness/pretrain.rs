//! Pre-training of the frozen base network.
//!
//! Uses Adam on every weight. Only the adapters are trained with the
//! sparse SGD loop; this step just produces a reasonable `W°`.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::harness::task::TaskBundle;
use crate::model::Mlp;
use crate::tensor::Matrix;
use crate::trainer::BatchSampler;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub hidden: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            steps: 2000,
            learning_rate: 0.01,
            batch_size: 64,
        }
    }
}

struct Adam {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(weights: &[Matrix]) -> Self {
        let zeros = || weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, weights: &mut [Matrix], grads: &[Matrix], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for ((w, g), (m, v)) in weights
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..w.len() {
                let gk = g.data()[k];
                let mk = Self::BETA1 * m.data()[k] + (1.0 - Self::BETA1) * gk;
                let vk = Self::BETA2 * v.data()[k] + (1.0 - Self::BETA2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                w.data_mut()[k] -= lr * (mk / c1) / ((vk / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains a `[features, hidden, classes]` MLP on `task.pretrain`.
pub fn pretrain_base(task: &TaskBundle, cfg: &PretrainConfig, seed: u64) -> Result<Mlp> {
    let Some(x) = task.pretrain.inputs() else {
        return Err(contract("pre-training split is empty"));
    };
    if cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(contract(
            "pre-training needs positive hidden size, batch size and learning rate",
        ));
    }
    let labels = task.pretrain.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::random(&[task.features(), cfg.hidden, task.num_classes()], &mut rng)?;
    let mut adam = Adam::new(net.weights());
    let mut sampler = BatchSampler::new(labels.len(), cfg.batch_size, seed ^ 0x5EED);
    for _ in 0..cfg.steps {
        let idx = sampler.next_batch();
        let xb = x.select_cols(&idx);
        let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (_, grads) = net.loss_and_grads(&xb, &yb)?;
        adam.step(&mut net.weights, &grads, cfg.learning_rate);
    }
    Ok(net)
}
