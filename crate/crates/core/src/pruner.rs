//! Row/column-wise top-k pruning of adapter factors and the cubic
//! keep-fraction schedule that drives it.
//!
//! Budgets are expressed as a *keep fraction* κ (share of entries retained
//! per row of `A` and per column of `B`). Configs that speak of sparsity
//! `s` are converted with `κ = 1 − s` at the boundary.

use serde::{Deserialize, Serialize};

use crate::adapter::LoraAdapter;
use crate::error::{contract, Error, Result};
use crate::sensitivity::SensitivityState;

/// Cubic decay of the keep fraction from 1 down to `final_keep`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsitySchedule {
    final_keep: f64,
    warmup_end: usize,
    decay_end: usize,
    total_steps: usize,
}

impl SparsitySchedule {
    /// `warmup_end` is the first step of the decay (`t_i`), `decay_end`
    /// the step where `final_keep` is reached (`t_f`).
    pub fn new(final_keep: f64, warmup_end: usize, decay_end: usize, total_steps: usize) -> Result<Self> {
        if !(final_keep > 0.0 && final_keep <= 1.0) {
            return Err(contract(format!(
                "final keep fraction must lie in (0, 1], got {final_keep}"
            )));
        }
        if warmup_end >= decay_end || decay_end > total_steps {
            return Err(contract(format!(
                "schedule needs t_i < t_f <= T, got t_i={warmup_end} t_f={decay_end} T={total_steps}"
            )));
        }
        Ok(Self {
            final_keep,
            warmup_end,
            decay_end,
            total_steps,
        })
    }

    /// Same as [`SparsitySchedule::new`] but takes the target sparsity `1 − κ`.
    pub fn from_sparsity(sparsity: f64, warmup_end: usize, decay_end: usize, total_steps: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&sparsity) {
            return Err(contract(format!("sparsity must lie in [0, 1), got {sparsity}")));
        }
        Self::new(1.0 - sparsity, warmup_end, decay_end, total_steps)
    }

    /// A schedule that never prunes.
    pub fn dense(total_steps: usize) -> Self {
        let total_steps = total_steps.max(1);
        Self {
            final_keep: 1.0,
            warmup_end: 0,
            decay_end: total_steps,
            total_steps,
        }
    }

    pub fn final_keep(&self) -> f64 {
        self.final_keep
    }

    pub fn warmup_end(&self) -> usize {
        self.warmup_end
    }

    pub fn decay_end(&self) -> usize {
        self.decay_end
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// Keep fraction at step `t` (1-based).
    pub fn keep_fraction_at(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.total_steps {
            return Err(contract(format!("step {t} outside 1..={}", self.total_steps)));
        }
        let keep = if t < self.warmup_end {
            1.0
        } else if t < self.decay_end {
            let progress = (t - self.warmup_end) as f64 / (self.decay_end - self.warmup_end) as f64;
            self.final_keep + (1.0 - self.final_keep) * (1.0 - progress).powi(3)
        } else {
            self.final_keep
        };
        Ok(keep)
    }
}

/// Number of entries a vector of length `len` keeps at fraction `keep`:
/// `max(1, ⌊keep·len⌋)`.
pub fn keep_count(keep: f64, len: usize) -> usize {
    ((keep * len as f64).floor() as usize).clamp(1, len.max(1))
}

/// Keeps the `keep_count(keep, d)` highest-scoring entries of `values` and
/// zeroes the rest. Equal scores go to the lower index. Returns the pruned
/// values and the 0/1 survivor mask.
pub fn prune_vector(values: &[f64], scores: &[f64], keep: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != scores.len() {
        return Err(Error::Shape {
            op: "prune_vector",
            lhs: (1, values.len()),
            rhs: (1, scores.len()),
        });
    }
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(contract(format!("keep fraction must lie in (0, 1], got {keep}")));
    }
    let d = values.len();
    let mut mask = vec![0.0; d];
    let mut pruned = vec![0.0; d];
    if d == 0 {
        return Ok((pruned, mask));
    }
    let k = keep_count(keep, d);
    if k == d {
        return Ok((values.to_vec(), vec![1.0; d]));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
    for &idx in &order[..k] {
        mask[idx] = 1.0;
        pruned[idx] = values[idx];
    }
    Ok((pruned, mask))
}

/// Applies [`prune_vector`] to every row of `A` (scored by the matching row
/// of the smoothed `A` scores) and every column of `B` (scored by the
/// matching column of the smoothed `B` scores), rewriting both masks.
pub fn prune_adapter(adapter: &mut LoraAdapter, scores: &SensitivityState, keep: f64) -> Result<()> {
    if !scores.matches(adapter) {
        return Err(Error::Shape {
            op: "prune_adapter",
            lhs: adapter.a().shape(),
            rhs: scores.ema_a().shape(),
        });
    }
    for i in 0..adapter.a.rows() {
        let (row, mask) = prune_vector(adapter.a.row(i), scores.ema_a().row(i), keep)?;
        adapter.a.set_row(i, &row);
        adapter.mask_a.set_row(i, &mask);
    }
    for j in 0..adapter.b.cols() {
        let (col, mask) = prune_vector(&adapter.b.col(j), &scores.ema_b().col(j), keep)?;
        adapter.b.set_col(j, &col);
        adapter.mask_b.set_col(j, &mask);
    }
    Ok(())
}
