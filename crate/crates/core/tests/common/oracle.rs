//! Straight-line re-implementation of the classifier used as a test oracle.
//!
//! Loops over scalars only; shares no code with the library beyond reading
//! parameter values.

#![allow(dead_code, clippy::needless_range_loop)]

use lieprobe_core::corpus::EncodedBatch;
use lieprobe_core::model::ModelParams;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn at(p: &lieprobe_core::tensor::Tensor<f64>, r: usize, c: usize) -> f64 {
    p.get(r, c)
}

/// One GRU update written out gate by gate.
pub fn gru(p: &ModelParams<f64>, x: &[f64], h: &[f64]) -> Vec<f64> {
    let m = x.len();
    let n = h.len();
    let mut z = vec![0.0; n];
    let mut r = vec![0.0; n];
    for j in 0..n {
        let mut sz = at(&p.b_z, 0, j);
        let mut sr = at(&p.b_r, 0, j);
        for i in 0..m {
            sz += x[i] * at(&p.w_z, i, j);
            sr += x[i] * at(&p.w_r, i, j);
        }
        for i in 0..n {
            sz += h[i] * at(&p.u_z, i, j);
            sr += h[i] * at(&p.u_r, i, j);
        }
        z[j] = sigmoid(sz);
        r[j] = sigmoid(sr);
    }
    let mut out = vec![0.0; n];
    for j in 0..n {
        let mut sc = at(&p.b_c, 0, j);
        for i in 0..m {
            sc += x[i] * at(&p.w_c, i, j);
        }
        for i in 0..n {
            sc += r[i] * h[i] * at(&p.u_c, i, j);
        }
        let cand = sc.tanh();
        out[j] = (1.0 - z[j]) * h[j] + z[j] * cand;
    }
    out
}

pub fn logits(p: &ModelParams<f64>, block: usize, h: &[f64]) -> Vec<f64> {
    let width = p.dense.cols();
    let mut act = vec![0.0; width];
    for (j, a) in act.iter_mut().enumerate() {
        let mut s = at(&p.dense_bias, 0, j);
        for (i, hi) in h.iter().enumerate() {
            s += hi * at(&p.dense, i, j);
        }
        *a = s.tanh();
    }
    let classes = p.combiner.rows();
    (0..classes)
        .map(|c| {
            let mut s = at(&p.combiner_bias, 0, c);
            for j in 0..block {
                s += act[c * block + j] * at(&p.combiner, c, j);
            }
            s
        })
        .collect()
}

pub fn xent(logits: &[f64], label: usize) -> f64 {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Mean cross-entropy of a padded batch, every column fed through the GRU.
pub fn batch_loss(p: &ModelParams<f64>, block: usize, batch: &EncodedBatch) -> f64 {
    let n = p.u_z.rows();
    let mut total = 0.0;
    for b in 0..batch.batch_size() {
        let mut h = vec![1.0 / (n as f64).sqrt(); n];
        for &w in batch.row(b) {
            let x: Vec<f64> = (0..p.embedding.cols())
                .map(|k| at(&p.embedding, w, k))
                .collect();
            h = gru(p, &x, &h);
        }
        total += xent(&logits(p, block, &h), batch.labels[b]);
    }
    total / batch.batch_size() as f64
}
