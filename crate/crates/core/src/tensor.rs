//! Dense 64-bit matrices and a small reverse-mode autodiff graph.
//!
//! Everything the rest of the crate needs sits on top of [`Matrix`]: weights,
//! gradients, sensitivity scores and 0/1 masks. [`Graph`] records a forward
//! pass built from a fixed op set (matmul, add, scale, ReLU, softmax
//! cross-entropy, mask multiply) and replays it backwards to get gradients
//! for every leaf.
//!
//! Summation order is fixed, so identical inputs always give bit-identical
//! outputs.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(contract(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(contract(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged or empty input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        assert!(!rows.is_empty(), "from_rows: no rows");
        let cols = rows[0].as_ref().len();
        assert!(cols > 0, "from_rows: empty row");
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "from_rows: ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Entries drawn independently from `uniform[lo, hi)`, row-major.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_row(&mut self, i: usize, values: &[f64]) {
        assert_eq!(values.len(), self.cols);
        self.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(values);
    }

    pub fn set_col(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, v) in values.iter().enumerate() {
            self.set(i, j, *v);
        }
    }

    fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    /// Matrix product. Each output entry sums over the inner index in
    /// ascending order starting from `+0.0`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix {
            rows: m,
            cols: n,
            data: out,
        })
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn zip_map(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        self.check_same_shape(other, op)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// `self -= lr * grad`, in place.
    pub fn axpy_in_place(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Number of entries exactly equal to zero (either sign).
    pub fn count_zeros(&self) -> usize {
        self.data.iter().filter(|v| **v == 0.0).count()
    }

    pub fn count_nonzeros(&self) -> usize {
        self.len() - self.count_zeros()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index of the largest entry in column `j`; the lowest index wins ties.
    pub fn argmax_col(&self, j: usize) -> usize {
        let mut best = 0;
        let mut best_v = self.get(0, j);
        for i in 1..self.rows {
            let v = self.get(i, j);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        best
    }

    /// Columns `idx` of `self`, in the given order.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        assert!(!idx.is_empty(), "select_cols: empty selection");
        Matrix::from_fn(self.rows, idx.len(), |i, j| self.get(i, idx[j]))
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Matrix) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Handle to a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    /// Mean softmax cross-entropy over the columns of `logits`.
    SoftmaxCe {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Matrix,
    },
    Mask(NodeId, Matrix),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
}

/// A forward pass recorded in topological order.
///
/// Nodes are evaluated eagerly as they are added, so a node can only refer
/// to nodes created before it.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).scale(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    /// Entrywise product with a constant mask.
    pub fn mask(&mut self, a: NodeId, mask: &Matrix) -> Result<NodeId> {
        let v = self.value(a).hadamard(mask)?;
        Ok(self.push(Op::Mask(a, mask.clone()), v))
    }

    /// Mean softmax cross-entropy of `logits` (classes × samples) against
    /// one label per column. Produces a 1×1 node.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let z = self.value(logits);
        let (classes, n) = z.shape();
        if labels.len() != n {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                lhs: z.shape(),
                rhs: (1, labels.len()),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(contract(format!("label {bad} out of range for {classes} classes")));
        }
        let mut probs = Matrix::zeros(classes, n);
        let mut loss = 0.0;
        for (j, &label) in labels.iter().enumerate() {
            let max = (0..classes).map(|i| z.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for i in 0..classes {
                let e = (z.get(i, j) - max).exp();
                probs.set(i, j, e);
                denom += e;
            }
            for i in 0..classes {
                probs.set(i, j, probs.get(i, j) / denom);
            }
            loss -= (z.get(label, j) - max) - denom.ln();
        }
        loss /= n as f64;
        let value = Matrix::filled(1, 1, loss);
        Ok(self.push(
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            value,
        ))
    }

    /// Reverse pass from a scalar `output`. Every leaf gets a gradient; leaves
    /// the output does not depend on get a zero matrix.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(contract(format!(
                "backward needs a scalar output, got {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::ones(1, 1));

        fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
            match slot {
                Some(existing) => existing
                    .axpy_in_place(1.0, &g)
                    .expect("gradient shape is fixed by the forward pass"),
                None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(upstream);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = upstream.matmul(&self.value(*b).transpose())?;
                    let gb = self.value(*a).transpose().matmul(&upstream)?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], upstream.clone());
                    accumulate(&mut grads[b.0], upstream);
                }
                Op::Scale(a, s) => {
                    accumulate(&mut grads[a.0], upstream.scale(*s));
                }
                Op::Relu(a) => {
                    let g = upstream.zip_map(self.value(*a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?;
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mask(a, mask) => {
                    accumulate(&mut grads[a.0], upstream.hadamard(mask)?);
                }
                Op::SoftmaxCe { logits, labels, probs } => {
                    let scale = upstream.get(0, 0) / labels.len() as f64;
                    let mut g = probs.clone();
                    for (j, &label) in labels.iter().enumerate() {
                        g.set(label, j, g.get(label, j) - 1.0);
                    }
                    accumulate(&mut grads[logits.0], g.scale(scale));
                }
            }
        }

        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf))
            .map(|(i, n)| {
                let g = grads[i]
                    .take()
                    .unwrap_or_else(|| Matrix::zeros(n.value.rows(), n.value.cols()));
                (NodeId(i), g)
            })
            .collect();
        Ok(Gradients { leaves })
    }
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    leaves: Vec<(NodeId, Matrix)>,
}

impl Gradients {
    /// Gradient for `leaf`. Panics if `leaf` is not a leaf of the graph.
    pub fn get(&self, leaf: NodeId) -> &Matrix {
        self.leaves
            .iter()
            .find(|(id, _)| *id == leaf)
            .map(|(_, g)| g)
            .expect("not a leaf of this graph")
    }

    pub fn take(&mut self, leaf: NodeId) -> Matrix {
        let pos = self
            .leaves
            .iter()
            .position(|(id, _)| *id == leaf)
            .expect("not a leaf of this graph");
        self.leaves.swap_remove(pos).1
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Matrix)> {
        self.leaves.iter().map(|(id, g)| (*id, g))
    }
}

/// Central-difference gradient estimate of `f` at `x`.
pub fn finite_diff_grad(f: impl Fn(&Matrix) -> f64, x: &Matrix, eps: f64) -> Result<Matrix> {
    if !(eps > 0.0) {
        return Err(contract(format!("finite difference step must be positive, got {eps}")));
    }
    let mut probe = x.clone();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for idx in 0..x.len() {
        let orig = probe.data[idx];
        probe.data[idx] = orig + eps;
        let plus = f(&probe);
        probe.data[idx] = orig - eps;
        let minus = f(&probe);
        probe.data[idx] = orig;
        out.data[idx] = (plus - minus) / (2.0 * eps);
    }
    Ok(out)
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    let diff = a.sub(b).expect("relative_error: shapes differ").frobenius();
    let scale = a.frobenius().max(b.frobenius());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn identity_times_matrix() {
        let x = m(&[&[1.5, -2.0], &[0.25, 7.0]]);
        assert_eq!(Matrix::identity(2).matmul(&x).unwrap(), x);
    }

    #[test]
    fn zero_column_annihilates() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let z = Matrix::zeros(2, 1);
        assert_eq!(a.matmul(&z).unwrap(), Matrix::zeros(2, 1));
    }

    #[test]
    fn outer_product() {
        let b = m(&[&[1.0], &[1.0]]);
        let a = m(&[&[2.0, 3.0]]);
        assert_eq!(b.matmul(&a).unwrap(), m(&[&[2.0, 3.0], &[2.0, 3.0]]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = Matrix::zeros(2, 3).matmul(&Matrix::zeros(2, 3)).unwrap_err();
        match err {
            Error::Shape { op, lhs, rhs } => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, (2, 3));
                assert_eq!(rhs, (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Matrix::zeros(2, 3)
            .matmul(&Matrix::zeros(2, 3))
            .unwrap_err()
            .to_string()
            .contains("(2, 3)"));
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn sum_of_scaled_input_has_constant_gradient() {
        // sum(X) = 1ᵀ X 1
        let x = Matrix::uniform(3, 4, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let mut g = Graph::new();
        let xl = g.leaf(x);
        let left = g.leaf(Matrix::ones(1, 3));
        let right = g.leaf(Matrix::ones(4, 1));
        let s = g.scale(xl, 2.0);
        let t = g.matmul(left, s).unwrap();
        let loss = g.matmul(t, right).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(xl), &Matrix::filled(3, 4, 2.0));
    }

    #[test]
    fn symmetric_softmax_gradient() {
        let mut g = Graph::new();
        let z = g.leaf(Matrix::zeros(2, 1));
        let loss = g.softmax_cross_entropy(z, &[0]).unwrap();
        assert!((g.value(loss).get(0, 0) - std::f64::consts::LN_2).abs() < 1e-15);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(z), &m(&[&[-0.5], &[0.5]]));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let used = g.leaf(Matrix::ones(1, 1));
        let unused = g.leaf(Matrix::ones(2, 3));
        let out = g.scale(used, 3.0);
        let grads = g.backward(out).unwrap();
        assert_eq!(grads.get(unused), &Matrix::zeros(2, 3));
        assert_eq!(grads.get(used), &Matrix::filled(1, 1, 3.0));
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Matrix::ones(2, 2));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_leaf_accumulates() {
        // loss = sum(x + x) with x 1x1
        let mut g = Graph::new();
        let x = g.leaf(Matrix::filled(1, 1, 0.3));
        let y = g.add(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).get(0, 0), 2.0);
    }

    #[test]
    fn mask_blocks_gradient() {
        let mask = m(&[&[1.0, 0.0]]);
        let mut g = Graph::new();
        let x = g.leaf(m(&[&[2.0, 5.0]]));
        let y = g.mask(x, &mask).unwrap();
        let col = g.leaf(Matrix::ones(2, 1));
        let s = g.matmul(y, col).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x), &mask);
        assert_eq!(g.value(s).get(0, 0), 2.0);
    }

    #[test]
    fn finite_diff_square() {
        let x = Matrix::filled(1, 1, 3.0);
        let g = finite_diff_grad(|m| m.frobenius_sq(), &x, 1e-5).unwrap();
        assert!((g.get(0, 0) - 6.0).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_constant() {
        let x = Matrix::uniform(2, 3, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        let g = finite_diff_grad(|_| 4.2, &x, 1e-5).unwrap();
        assert_eq!(g, Matrix::zeros(2, 3));
    }

    #[test]
    fn finite_diff_rejects_nonpositive_step() {
        assert!(finite_diff_grad(|m| m.sum(), &Matrix::ones(1, 1), 0.0).is_err());
    }

    #[test]
    fn softmax_ce_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = Matrix::uniform(4, 6, -1.0, 1.0, &mut rng);
        let labels = [0, 3, 2, 1, 1, 0];
        let f = |z: &Matrix| {
            let mut g = Graph::new();
            let l = g.leaf(z.clone());
            let loss = g.softmax_cross_entropy(l, &labels).unwrap();
            g.value(loss).get(0, 0)
        };
        let mut g = Graph::new();
        let l = g.leaf(logits.clone());
        let loss = g.softmax_cross_entropy(l, &labels).unwrap();
        let analytic = g.backward(loss).unwrap().take(l);
        let numeric = finite_diff_grad(f, &logits, 1e-5).unwrap();
        assert!(relative_error(&analytic, &numeric) < 1e-6);
    }

    proptest! {
        #[test]
        fn product_equals_sum_of_rank_one_terms(seed in any::<u64>(), d1 in 1usize..9, d2 in 1usize..9, r in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = Matrix::uniform(d1, r, -1.0, 1.0, &mut rng);
            let a = Matrix::uniform(r, d2, -1.0, 1.0, &mut rng);
            let ba = b.matmul(&a).unwrap();
            let mut acc = Matrix::zeros(d1, d2);
            for i in 0..r {
                let col = Matrix::new(d1, 1, b.col(i)).unwrap();
                let row = Matrix::new(1, d2, a.row(i).to_vec()).unwrap();
                acc = acc.add(&col.matmul(&row).unwrap()).unwrap();
            }
            prop_assert!(ba.sub(&acc).unwrap().max_abs() <= 1e-12);
        }

        #[test]
        fn matmul_is_deterministic(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Matrix::uniform(5, 7, -1.0, 1.0, &mut rng);
            let b = Matrix::uniform(7, 3, -1.0, 1.0, &mut rng);
            prop_assert!(a.matmul(&b).unwrap().bit_eq(&a.matmul(&b).unwrap()));
        }
    }
}
