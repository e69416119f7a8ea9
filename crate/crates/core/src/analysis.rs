//! Zero-pattern analysis of low-rank products.
//!
//! For a rank-one product `b·a` the zero fraction is exactly
//! `s_a + s_b − s_a·s_b`. For `B·A = Σᵢ B₍*i₎A₍i*₎` the nonzero supports of
//! the rank-one terms can at worst be disjoint, giving the lower bound
//!
//! ```text
//! s(BA) ≥ max(0, 1 + Σᵢ (s(A_i*) + s(B_*i) − s(A_i*)·s(B_*i)) − r)
//! ```
//!
//! Sparsity of individual factors is not enough on its own: a single dense
//! row of `A` paired with a single dense column of `B` gives a dense product
//! even though each factor is `(r−1)/r` sparse ([`example1_counterexample`]).
//!
//! All zero tests are exact. Random nonzero entries come from a continuous
//! distribution bounded away from zero, so accidental cancellation has
//! probability zero.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::tensor::Matrix;

/// Fraction of entries exactly equal to zero.
pub fn sparsity(m: &Matrix) -> f64 {
    m.count_zeros() as f64 / m.len() as f64
}

/// Fraction of exactly-zero entries of a slice. Empty slices count as dense.
pub fn vector_sparsity(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().filter(|x| **x == 0.0).count() as f64 / v.len() as f64
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(contract(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Zero fraction of `b·a` for vectors with zero fractions `s_a`, `s_b`.
pub fn rank_one_sparsity(s_a: f64, s_b: f64) -> Result<f64> {
    check_unit("s_a", s_a)?;
    check_unit("s_b", s_b)?;
    Ok(s_a + s_b - s_a * s_b)
}

/// Exact zero count of `b·aᵀ` given zero counts of `a` (length `d2`) and
/// `b` (length `d1`).
pub fn rank_one_zero_count(zeros_a: usize, zeros_b: usize, d1: usize, d2: usize) -> usize {
    zeros_b * d2 + zeros_a * d1 - zeros_a * zeros_b
}

/// Lower bound on the zero fraction of `B·A` from the zero fractions of the
/// rows of `A` (`row_s`) and the columns of `B` (`col_s`).
pub fn product_sparsity_lower_bound(row_s: &[f64], col_s: &[f64]) -> Result<f64> {
    if row_s.len() != col_s.len() {
        return Err(Error::Shape {
            op: "product_sparsity_lower_bound",
            lhs: (1, row_s.len()),
            rhs: (1, col_s.len()),
        });
    }
    let r = row_s.len() as f64;
    let mut sum = 0.0;
    for (&sa, &sb) in row_s.iter().zip(col_s) {
        sum += rank_one_sparsity(sa, sb)?;
    }
    Ok((1.0 + sum - r).max(0.0))
}

/// Zero fractions of each row of `a` and each column of `b`.
pub fn factor_sparsities(a: &Matrix, b: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let rows = (0..a.rows()).map(|i| vector_sparsity(a.row(i))).collect();
    let cols = (0..b.cols()).map(|j| vector_sparsity(&b.col(j))).collect();
    (rows, cols)
}

/// The bound evaluated on the realized zero patterns of `a` and `b`.
pub fn bound_for_factors(a: &Matrix, b: &Matrix) -> Result<f64> {
    let (rows, cols) = factor_sparsities(a, b);
    product_sparsity_lower_bound(&rows, &cols)
}

/// Nonzero draw: magnitude in `[0.5, 1.5)`, random sign.
fn generic_value<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mag = rng.gen_range(0.5..1.5);
    if rng.gen::<bool>() {
        mag
    } else {
        -mag
    }
}

/// Zeros needed to reach at least `s` sparsity in a vector of length `len`.
pub fn zeros_for(s: f64, len: usize) -> usize {
    (((s * len as f64) - 1e-9).ceil().max(0.0) as usize).min(len)
}

/// Vector of length `len` with exactly `zeros` zeros at random positions and
/// generic nonzero values elsewhere.
pub fn masked_vector<R: Rng + ?Sized>(len: usize, zeros: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| generic_value(rng)).collect();
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    for &i in idx.iter().take(zeros) {
        v[i] = 0.0;
    }
    v
}

/// Random `A` (`r×d2`) and `B` (`d1×r`) where row `i` of `A` has at least
/// `row_s[i]` sparsity and column `i` of `B` at least `col_s[i]`, rounded up
/// to whole entries.
pub fn rows_cols_masked_pair<R: Rng + ?Sized>(
    row_s: &[f64],
    col_s: &[f64],
    d1: usize,
    d2: usize,
    rng: &mut R,
) -> (Matrix, Matrix) {
    assert_eq!(row_s.len(), col_s.len(), "rank mismatch");
    let r = row_s.len();
    let mut a = Matrix::zeros(r, d2);
    let mut b = Matrix::zeros(d1, r);
    for i in 0..r {
        a.set_row(i, &masked_vector(d2, zeros_for(row_s[i], d2), rng));
        b.set_col(i, &masked_vector(d1, zeros_for(col_s[i], d1), rng));
    }
    (a, b)
}

/// `A = [aᵀ; 0]`, `B = [b, 0]` with `a`, `b` entrywise nonzero: each factor
/// is `(r−1)/r` sparse while `B·A = b·aᵀ` has no zeros.
pub fn example1_counterexample(r: usize, d1: usize, d2: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    if r < 2 {
        return Err(contract(format!("the counterexample needs rank >= 2, got {r}")));
    }
    if d1 == 0 || d2 == 0 {
        return Err(contract("dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Matrix::zeros(r, d2);
    let mut b = Matrix::zeros(d1, r);
    a.set_row(0, &masked_vector(d2, 0, &mut rng));
    b.set_col(0, &masked_vector(d1, 0, &mut rng));
    Ok((a, b))
}

/// One grid cell of [`empirical_bound_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSweepRow {
    pub row_sparsity: f64,
    pub col_sparsity: f64,
    pub rank: usize,
    /// Mean of `s(BA)` over the trials.
    pub empirical_product_sparsity: f64,
    /// The lower bound at the nominal row/column sparsities.
    pub theoretical_bound: f64,
    pub trials: usize,
    /// Smallest `s(BA)` seen in any trial.
    pub min_product_sparsity: f64,
}

/// SplitMix64 finaliser over a sequence of words; used to give every trial
/// its own generator so results do not depend on evaluation order.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// For every `(row_s, col_s)` in `grid × grid`, samples `trials` random
/// factor pairs with uniform per-row / per-column sparsity and records the
/// mean product sparsity next to the bound.
pub fn empirical_bound_sweep(
    grid: &[f64],
    rank: usize,
    d1: usize,
    d2: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<BoundSweepRow>> {
    if trials == 0 || rank == 0 || d1 == 0 || d2 == 0 {
        return Err(contract("trials, rank and dimensions must be positive"));
    }
    if let Some(bad) = grid.iter().find(|s| !(0.0..1.0).contains(*s)) {
        return Err(contract(format!("grid values must lie in [0, 1), got {bad}")));
    }
    let mut rows = Vec::with_capacity(grid.len() * grid.len());
    for (ri, &row_s) in grid.iter().enumerate() {
        for (ci, &col_s) in grid.iter().enumerate() {
            let rs = vec![row_s; rank];
            let cs = vec![col_s; rank];
            let bound = product_sparsity_lower_bound(&rs, &cs)?;
            let mut total = 0.0;
            let mut min = f64::INFINITY;
            for trial in 0..trials {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, ri as u64, ci as u64, trial as u64]));
                let (a, b) = rows_cols_masked_pair(&rs, &cs, d1, d2, &mut rng);
                let s = sparsity(&b.matmul(&a)?);
                total += s;
                min = min.min(s);
            }
            rows.push(BoundSweepRow {
                row_sparsity: row_s,
                col_sparsity: col_s,
                rank,
                empirical_product_sparsity: total / trials as f64,
                theoretical_bound: bound,
                trials,
                min_product_sparsity: min,
            });
        }
    }
    Ok(rows)
}
