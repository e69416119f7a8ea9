//! Plain low-rank-adapter SGD written with nested `Vec`s and explicit loops,
//! used as an oracle for the library's training step.
//!
//! Sums run over the inner index in ascending order from `0.0`, which is the
//! summation order the library documents for its matrix product.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn from_flat(rows: usize, cols: usize, data: &[f64]) -> Mat {
    (0..rows).map(|i| data[i * cols..(i + 1) * cols].to_vec()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    let (m, k, n) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i][p] * b[p][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// `a · bᵀ`
fn mm_bt(a: &Mat, b: &Mat) -> Mat {
    let (m, k, n) = (a.len(), a[0].len(), b.len());
    let mut out = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i][p] * b[j][p];
            }
            out[i][j] = s;
        }
    }
    out
}

/// `aᵀ · b`
fn mm_at(a: &Mat, b: &Mat) -> Mat {
    let (m, k, n) = (a[0].len(), a.len(), b[0].len());
    let mut out = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[p][i] * b[p][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub struct Layer {
    pub w0: Mat,
    pub a: Mat,
    pub b: Mat,
}

/// Mean cross-entropy over the columns of `x` and the gradients of every
/// `(A, B)` pair.
pub fn loss_and_grads(layers: &[Layer], x: &Mat, labels: &[usize]) -> (f64, Vec<(Mat, Mat)>) {
    let last = layers.len() - 1;
    let mut inputs = Vec::new();
    let mut downs = Vec::new();
    let mut pre = Vec::new();
    let mut h = x.clone();
    for (l, layer) in layers.iter().enumerate() {
        let base = mm(&layer.w0, &h);
        let down = mm(&layer.a, &h);
        let up = mm(&layer.b, &down);
        let z: Mat = base
            .iter()
            .zip(&up)
            .map(|(r0, r1)| r0.iter().zip(r1).map(|(p, q)| p + q).collect())
            .collect();
        inputs.push(h);
        downs.push(down);
        h = if l == last {
            z.clone()
        } else {
            z.iter()
                .map(|r| r.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect())
                .collect()
        };
        pre.push(z);
    }

    let logits = &h;
    let (classes, n) = (logits.len(), logits[0].len());
    let mut loss = 0.0;
    let mut g = vec![vec![0.0; n]; classes];
    let inv_n = 1.0 / n as f64;
    for j in 0..n {
        let mut max = f64::NEG_INFINITY;
        for row in logits.iter() {
            max = max.max(row[j]);
        }
        let mut denom = 0.0;
        let mut e = vec![0.0; classes];
        for i in 0..classes {
            e[i] = (logits[i][j] - max).exp();
            denom += e[i];
        }
        for i in 0..classes {
            let p = e[i] / denom;
            let target = if i == labels[j] { 1.0 } else { 0.0 };
            g[i][j] = (p - target) * inv_n;
        }
        loss -= (logits[labels[j]][j] - max) - denom.ln();
    }
    loss /= n as f64;

    let mut grads = vec![(Vec::new(), Vec::new()); layers.len()];
    for l in (0..layers.len()).rev() {
        if l != last {
            for (gr, zr) in g.iter_mut().zip(&pre[l]) {
                for (gv, &zv) in gr.iter_mut().zip(zr) {
                    if zv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
        }
        let layer = &layers[l];
        let gb = mm_bt(&g, &downs[l]);
        let gdown = mm_at(&layer.b, &g);
        let ga = mm_bt(&gdown, &inputs[l]);
        let from_a = mm_at(&layer.a, &gdown);
        let from_w0 = mm_at(&layer.w0, &g);
        g = from_a
            .iter()
            .zip(&from_w0)
            .map(|(r0, r1)| r0.iter().zip(r1).map(|(p, q)| p + q).collect())
            .collect();
        grads[l] = (ga, gb);
    }
    (loss, grads)
}

/// Mini-batch order: shuffle `0..n` with a seeded ChaCha8 generator, walk it
/// in chunks and reshuffle once a full batch no longer fits.
pub fn batches(n: usize, batch: usize, seed: u64, steps: usize) -> Vec<Vec<usize>> {
    let batch = batch.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        if cursor + batch > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        out.push(order[cursor..cursor + batch].to_vec());
        cursor += batch;
    }
    out
}

/// Plain SGD on every `A` and `B`; returns the per-step (pre-update) losses.
pub fn sgd(
    layers: &mut [Layer],
    x: &Mat,
    labels: &[usize],
    lr: f64,
    batch: usize,
    seed: u64,
    steps: usize,
) -> Vec<f64> {
    let mut losses = Vec::with_capacity(steps);
    for idx in batches(labels.len(), batch, seed, steps) {
        let xb: Mat = x.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect();
        let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, grads) = loss_and_grads(layers, &xb, &yb);
        losses.push(loss);
        for (layer, (ga, gb)) in layers.iter_mut().zip(grads) {
            for (row, grow) in layer.a.iter_mut().zip(&ga) {
                for (v, g) in row.iter_mut().zip(grow) {
                    *v += -lr * g;
                }
            }
            for (row, grow) in layer.b.iter_mut().zip(&gb) {
                for (v, g) in row.iter_mut().zip(grow) {
                    *v += -lr * g;
                }
            }
        }
    }
    losses
}
