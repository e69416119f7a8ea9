//! Small ReLU multilayer perceptrons, dense and adapted.
//!
//! Inputs are column-major batches (`features × samples`), layers have no
//! bias term. Tasks that want an affine layer append a constant feature.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::LoraAdapter;
use crate::error::{contract, Result};
use crate::tensor::{Graph, Matrix};

/// Dense MLP with ReLU between layers and logits at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub(crate) weights: Vec<Matrix>,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`; weights use He-uniform init.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(contract(format!("invalid layer dims {dims:?}")));
        }
        let weights = dims
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                Matrix::uniform(w[1], w[0], -bound, bound, rng)
            })
            .collect();
        Ok(Self { weights })
    }

    pub fn from_weights(weights: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(contract("an MLP needs at least one layer"));
        }
        for pair in weights.windows(2) {
            if pair[0].rows() != pair[1].cols() {
                return Err(contract(format!(
                    "layer shapes do not chain: {:?} then {:?}",
                    pair[0].shape(),
                    pair[1].shape()
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].rows()
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (l, w) in self.weights.iter().enumerate() {
            h = w.matmul(&h)?;
            if l != last {
                h = relu(&h);
            }
        }
        Ok(h)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_cols(&self.logits(x)?))
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        Ok(accuracy(&self.predict(x)?, labels))
    }

    /// Mean cross-entropy and its gradient for every weight matrix.
    pub fn loss_and_grads(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        let mut g = Graph::new();
        let last = self.weights.len() - 1;
        let mut h = g.leaf(x.clone());
        let mut ids = Vec::with_capacity(self.weights.len());
        for (l, w) in self.weights.iter().enumerate() {
            let wid = g.leaf(w.clone());
            ids.push(wid);
            h = g.matmul(wid, h)?;
            if l != last {
                h = g.relu(h);
            }
        }
        let loss = g.softmax_cross_entropy(h, labels)?;
        let value = g.value(loss).get(0, 0);
        let mut grads = g.backward(loss)?;
        Ok((value, ids.into_iter().map(|id| grads.take(id)).collect()))
    }
}

/// An [`Mlp`] whose every weight is frozen and wrapped in a [`LoraAdapter`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraMlp {
    pub(crate) layers: Vec<LoraAdapter>,
}

/// Gradients for the two factors of one adapted layer.
#[derive(Debug, Clone)]
pub struct FactorGrads {
    pub a: Matrix,
    pub b: Matrix,
}

impl LoraMlp {
    /// Wraps each layer of `base` with a rank-`rank` adapter. Layer `l`
    /// draws its `A` from seed `seed + l`.
    pub fn from_base(base: &Mlp, rank: usize, seed: u64) -> Result<Self> {
        let layers = base
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| LoraAdapter::init(w.clone(), rank, seed.wrapping_add(l as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<LoraAdapter>) -> Result<Self> {
        if layers.is_empty() {
            return Err(contract("an adapted MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].dims().0 != pair[1].dims().1 {
                return Err(contract("adapted layer shapes do not chain"));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LoraAdapter] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LoraAdapter] {
        &mut self.layers
    }

    /// The frozen base network.
    pub fn base(&self) -> Mlp {
        Mlp {
            weights: self.layers.iter().map(|l| l.w0().clone()).collect(),
        }
    }

    /// The network with every update folded into its weight.
    pub fn merged(&self) -> Mlp {
        Mlp {
            weights: self.layers.iter().map(LoraAdapter::effective_weight).collect(),
        }
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (l, ad) in self.layers.iter().enumerate() {
            h = ad.forward(&h)?;
            if l != last {
                h = relu(&h);
            }
        }
        Ok(h)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_cols(&self.logits(x)?))
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        Ok(accuracy(&self.predict(x)?, labels))
    }

    /// Mean cross-entropy and gradients for `A` and `B` of every layer.
    /// Each layer computes `W°·h + B·(A·h)`.
    pub fn loss_and_grads(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, Vec<FactorGrads>)> {
        let mut g = Graph::new();
        let last = self.layers.len() - 1;
        let mut h = g.leaf(x.clone());
        let mut ids = Vec::with_capacity(self.layers.len());
        for (l, ad) in self.layers.iter().enumerate() {
            let w0 = g.leaf(ad.w0().clone());
            let a = g.leaf(ad.a().clone());
            let b = g.leaf(ad.b().clone());
            let base = g.matmul(w0, h)?;
            let down = g.matmul(a, h)?;
            let up = g.matmul(b, down)?;
            h = g.add(base, up)?;
            if l != last {
                h = g.relu(h);
            }
            ids.push((a, b));
        }
        let loss = g.softmax_cross_entropy(h, labels)?;
        let value = g.value(loss).get(0, 0);
        let mut grads = g.backward(loss)?;
        let out = ids
            .into_iter()
            .map(|(a, b)| FactorGrads {
                a: grads.take(a),
                b: grads.take(b),
            })
            .collect();
        Ok((value, out))
    }

    /// Fraction of exactly-zero entries across the updates of all layers.
    pub fn delta_sparsity(&self) -> f64 {
        let (zeros, total) = self.layers.iter().fold((0usize, 0usize), |(z, n), l| {
            let d = l.delta();
            (z + d.count_zeros(), n + d.len())
        });
        zeros as f64 / total as f64
    }

    /// Number of trainable entries currently nonzero across all factors.
    pub fn active_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.a().count_nonzeros() + l.b().count_nonzeros())
            .sum()
    }
}

pub(crate) fn relu(m: &Matrix) -> Matrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn argmax_cols(logits: &Matrix) -> Vec<usize> {
    (0..logits.cols()).map(|j| logits.argmax_col(j)).collect()
}

/// Share of positions where `predicted` and `labels` agree. Empty input
/// scores 1.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(predicted.len(), labels.len(), "accuracy: length mismatch");
    if labels.is_empty() {
        return 1.0;
    }
    predicted.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_adapters_match_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let base = Mlp::random(&[5, 8, 3], &mut rng).unwrap();
        let lora = LoraMlp::from_base(&base, 2, 1).unwrap();
        let x = Matrix::uniform(5, 10, -1.0, 1.0, &mut rng);
        assert!(lora.logits(&x).unwrap().bit_eq(&base.logits(&x).unwrap()));
        assert_eq!(lora.base(), base);
        assert_eq!(lora.delta_sparsity(), 1.0);
    }

    #[test]
    fn dense_grads_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = Mlp::random(&[4, 6, 3], &mut rng).unwrap();
        let x = Matrix::uniform(4, 7, -1.0, 1.0, &mut rng);
        let labels = [0, 1, 2, 2, 1, 0, 1];
        let (_, grads) = base.loss_and_grads(&x, &labels).unwrap();
        for (l, grad) in grads.iter().enumerate() {
            let numeric = crate::tensor::finite_diff_grad(
                |w| {
                    let mut m = base.clone();
                    m.weights[l] = w.clone();
                    m.loss_and_grads(&x, &labels).unwrap().0
                },
                &base.weights[l],
                1e-5,
            )
            .unwrap();
            assert!(crate::tensor::relative_error(grad, &numeric) < 1e-6);
        }
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 0, 3, 0]), 0.5);
        assert_eq!(accuracy(&[], &[]), 1.0);
    }

    #[test]
    fn chain_check() {
        assert!(Mlp::from_weights(vec![Matrix::zeros(3, 2), Matrix::zeros(2, 4)]).is_err());
        assert!(Mlp::from_weights(vec![Matrix::zeros(3, 2), Matrix::zeros(2, 3)]).is_ok());
    }
}
