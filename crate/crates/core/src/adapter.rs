//! Low-rank adapter over a frozen base weight: `W = W° + B·A`.
//!
//! No `α/r` scaling is applied to the update. Both factors carry an explicit
//! 0/1 mask and stored entries are always zero where their mask is zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter {
    pub(crate) w0: Matrix,
    pub(crate) a: Matrix,
    pub(crate) b: Matrix,
    pub(crate) mask_a: Matrix,
    pub(crate) mask_b: Matrix,
}

impl LoraAdapter {
    /// Wraps `w0` (`d1×d2`) with a rank-`rank` adapter.
    ///
    /// `A` is drawn from `uniform(−1/√d2, 1/√d2)` with a generator seeded by
    /// `seed`; `B` starts at zero, so the adapter is a no-op until trained.
    /// Both masks start dense.
    pub fn init(w0: Matrix, rank: usize, seed: u64) -> Result<Self> {
        let (d1, d2) = w0.shape();
        if rank == 0 || rank > d1.min(d2) {
            return Err(contract(format!(
                "rank {rank} out of range 1..={} for a {d1}x{d2} weight",
                d1.min(d2)
            )));
        }
        let bound = 1.0 / (d2 as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::uniform(rank, d2, -bound, bound, &mut rng);
        Ok(Self {
            w0,
            a,
            b: Matrix::zeros(d1, rank),
            mask_a: Matrix::ones(rank, d2),
            mask_b: Matrix::ones(d1, rank),
        })
    }

    /// Assembles an adapter from explicit parts. Shapes and mask values are
    /// validated; entries outside the masks are zeroed.
    pub fn from_parts(w0: Matrix, a: Matrix, b: Matrix, mask_a: Matrix, mask_b: Matrix) -> Result<Self> {
        let (d1, d2) = w0.shape();
        let r = a.rows();
        if a.cols() != d2 {
            return Err(Error::Shape {
                op: "adapter A",
                lhs: w0.shape(),
                rhs: a.shape(),
            });
        }
        if b.shape() != (d1, r) {
            return Err(Error::Shape {
                op: "adapter B",
                lhs: w0.shape(),
                rhs: b.shape(),
            });
        }
        if mask_a.shape() != a.shape() {
            return Err(Error::Shape {
                op: "mask_a",
                lhs: a.shape(),
                rhs: mask_a.shape(),
            });
        }
        if mask_b.shape() != b.shape() {
            return Err(Error::Shape {
                op: "mask_b",
                lhs: b.shape(),
                rhs: mask_b.shape(),
            });
        }
        if r > d1.min(d2) {
            return Err(contract(format!("rank {r} exceeds min({d1}, {d2})")));
        }
        for m in [&mask_a, &mask_b] {
            if m.data().iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(contract("masks must be 0/1 valued"));
            }
        }
        let mut ad = Self {
            w0,
            a,
            b,
            mask_a,
            mask_b,
        };
        ad.apply_masks();
        Ok(ad)
    }

    /// Replaces both factors, keeping the current masks.
    pub fn with_factors(self, a: Matrix, b: Matrix) -> Result<Self> {
        Self::from_parts(self.w0, a, b, self.mask_a, self.mask_b)
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn mask_a(&self) -> &Matrix {
        &self.mask_a
    }

    pub fn mask_b(&self) -> &Matrix {
        &self.mask_b
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    /// `(d1, d2)` of the adapted weight.
    pub fn dims(&self) -> (usize, usize) {
        self.w0.shape()
    }

    /// The low-rank update `B·A`.
    pub fn delta(&self) -> Matrix {
        self.b.matmul(&self.a).expect("adapter factors have matching rank")
    }

    /// `W° + B·A`.
    pub fn effective_weight(&self) -> Matrix {
        self.w0.add(&self.delta()).expect("delta has the base weight's shape")
    }

    /// `W°·x + B·(A·x)`, which avoids forming the dense update.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let base = self.w0.matmul(x)?;
        let low = self.b.matmul(&self.a.matmul(x)?)?;
        base.add(&low)
    }

    /// Fraction of exactly-zero entries of `B·A`.
    pub fn delta_sparsity(&self) -> f64 {
        let d = self.delta();
        d.count_zeros() as f64 / d.len() as f64
    }

    /// Zeroes every entry of `A` and `B` whose mask is zero. Idempotent.
    pub fn apply_masks(&mut self) {
        enforce(&mut self.a, &self.mask_a);
        enforce(&mut self.b, &self.mask_b);
    }

    /// Nonzero count of each row of `A`.
    pub fn a_row_nnz(&self) -> Vec<usize> {
        (0..self.a.rows())
            .map(|i| self.a.row(i).iter().filter(|v| **v != 0.0).count())
            .collect()
    }

    /// Nonzero count of each column of `B`.
    pub fn b_col_nnz(&self) -> Vec<usize> {
        (0..self.b.cols())
            .map(|j| self.b.col(j).iter().filter(|v| **v != 0.0).count())
            .collect()
    }
}

fn enforce(values: &mut Matrix, mask: &Matrix) {
    for (v, m) in values.data_mut().iter_mut().zip(mask.data()) {
        if *m == 0.0 {
            *v = 0.0;
        }
    }
}
