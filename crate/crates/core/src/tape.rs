//! Reverse-mode differentiation over [`Tensor`] operations.
//!
//! A [`Tape`] records each primitive as it is evaluated. Nodes are appended
//! in evaluation order, so the record is already topologically sorted and
//! [`Tape::backward`] is a single reverse sweep. The tape is consumed by the
//! sweep: one backward pass per forward pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Const,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    Affine(usize, T),
    Sigmoid(usize),
    Tanh(usize),
    Gather {
        table: usize,
        ids: Vec<usize>,
    },
    RowNorm(usize),
    ClampMin(usize, T),
    Mean(usize),
    SoftmaxXent {
        logits: usize,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
    BlockLinear {
        x: usize,
        w: usize,
        block: usize,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every node of a consumed tape.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor<T> {
        match self.grads.get(var.0) {
            Some(Some(g)) => g.clone(),
            _ => {
                let (r, c) = self.shapes.get(var.0).copied().unwrap_or((0, 0));
                Tensor::zeros(r, c)
            }
        }
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(existing) => {
            for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += *v;
            }
        }
        None => *slot = Some(g),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Registers a differentiable input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers an input that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.val(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).matmul(self.val(b))?;
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).add(self.val(b))?;
        Ok(self.push(out, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).sub(self.val(b))?;
        Ok(self.push(out, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).mul(self.val(b))?;
        Ok(self.push(out, Op::Mul(a.0, b.0)))
    }

    /// Elementwise quotient. Divisors must be non-zero.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).zip_map(self.val(b), "div", |x, y| x / y)?;
        Ok(self.push(out, Op::Div(a.0, b.0)))
    }

    /// Adds a `1 x cols` bias row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let out = self.val(a).add_row(self.val(bias))?;
        Ok(self.push(out, Op::AddRow(a.0, bias.0)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.affine(a, s, T::ZERO)
    }

    /// `alpha * a + beta`.
    pub fn affine(&mut self, a: Var, alpha: T, beta: T) -> Var {
        let out = self.val(a).affine(alpha, beta);
        self.push(out, Op::Affine(a.0, alpha))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.val(a).sigmoid();
        self.push(out, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.val(a).tanh();
        self.push(out, Op::Tanh(a.0))
    }

    /// Selects rows of `table`; gradients scatter-add back.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let out = self.val(table).gather_rows(ids)?;
        Ok(self.push(
            out,
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Euclidean norm of each row (`rows x 1`).
    pub fn row_norm(&mut self, a: Var) -> Var {
        let out = self.val(a).row_norms();
        self.push(out, Op::RowNorm(a.0))
    }

    /// `max(a, floor)` elementwise.
    pub fn clamp_min(&mut self, a: Var, floor: T) -> Var {
        let out = self.val(a).map(|v| if v > floor { v } else { floor });
        self.push(out, Op::ClampMin(a.0, floor))
    }

    /// Mean of all entries (`1 x 1`).
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.val(a);
        let n = t.data().len().max(1) as f64;
        let s: f64 = t.data().iter().map(|v| v.to_f64()).sum();
        self.push(Tensor::row_vector(vec![T::from_f64(s / n)]), Op::Mean(a.0))
    }

    /// Mean cross-entropy of row-wise softmax against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let z = self.val(logits);
        if z.rows() != labels.len() {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                left: z.shape(),
                right: (labels.len(), 1),
            });
        }
        let mut probs = Tensor::zeros(z.rows(), z.cols());
        let mut total = 0.0f64;
        for (r, &label) in labels.iter().enumerate() {
            if label >= z.cols() {
                return Err(Error::Index {
                    what: "label",
                    index: label,
                    bound: z.cols(),
                });
            }
            let (p, loss) = softmax_xent_row(z.row(r), label);
            for (dst, v) in probs.row_mut(r).iter_mut().zip(p) {
                *dst = T::from_f64(v);
            }
            total += loss;
        }
        let mean = total / labels.len().max(1) as f64;
        Ok(self.push(
            Tensor::row_vector(vec![T::from_f64(mean)]),
            Op::SoftmaxXent {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Block-diagonal combination: `out[b, c] = sum_j x[b, c*block + j] * w[c, j]`.
    pub fn block_linear(&mut self, x: Var, w: Var, block: usize) -> Result<Var> {
        let out = block_linear(self.val(x), self.val(w), block)?;
        Ok(self.push(
            out,
            Op::BlockLinear {
                x: x.0,
                w: w.0,
                block,
            },
        ))
    }

    /// Reverse sweep from the scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        let n = self.nodes.len();
        if loss.0 >= n {
            return Err(Error::Usage(format!(
                "backward from node {} which is not recorded on this tape ({} nodes)",
                loss.0, n
            )));
        }
        if self.nodes[loss.0].value.shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward requires a 1x1 loss, got {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let shapes: Vec<_> = self.nodes.iter().map(|nd| nd.value.shape()).collect();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[loss.0] = Some(Tensor::filled(1, 1, T::ONE));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Const => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(&self.nodes[*b].value)?;
                    let gb = self.nodes[*a].value.t_matmul(&g)?;
                    accumulate(&mut grads[*a], ga);
                    accumulate(&mut grads[*b], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[*a], g.clone());
                    accumulate(&mut grads[*b], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[*b], g.scale(-T::ONE));
                    accumulate(&mut grads[*a], g);
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(&self.nodes[*b].value)?;
                    let gb = g.mul(&self.nodes[*a].value)?;
                    accumulate(&mut grads[*a], ga);
                    accumulate(&mut grads[*b], gb);
                }
                Op::Div(a, b) => {
                    let ga = g.zip_map(&self.nodes[*b].value, "div", |gi, bi| gi / bi)?;
                    let gb = ga.zip_map(&node.value, "div", |gai, q| -gai * q)?;
                    accumulate(&mut grads[*a], ga);
                    accumulate(&mut grads[*b], gb);
                }
                Op::AddRow(a, bias) => {
                    accumulate(&mut grads[*bias], g.sum_rows());
                    accumulate(&mut grads[*a], g);
                }
                Op::Affine(a, alpha) => {
                    accumulate(&mut grads[*a], g.scale(*alpha));
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, "sigmoid", |gi, s| gi * s * (T::ONE - s))?;
                    accumulate(&mut grads[*a], ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, "tanh", |gi, y| gi * (T::ONE - y * y))?;
                    accumulate(&mut grads[*a], ga);
                }
                Op::Gather { table, ids } => {
                    let (rows, cols) = shapes[*table];
                    let mut gt = Tensor::zeros(rows, cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (dst, &v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *dst += v;
                        }
                    }
                    accumulate(&mut grads[*table], gt);
                }
                Op::RowNorm(a) => {
                    let av = &self.nodes[*a].value;
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        let nrm = node.value.get(r, 0);
                        if nrm == T::ZERO {
                            continue;
                        }
                        let coef = g.get(r, 0) / nrm;
                        for (dst, &x) in ga.row_mut(r).iter_mut().zip(av.row(r)) {
                            *dst = coef * x;
                        }
                    }
                    accumulate(&mut grads[*a], ga);
                }
                Op::ClampMin(a, floor) => {
                    let av = &self.nodes[*a].value;
                    let f = *floor;
                    let ga =
                        g.zip_map(av, "clamp_min", |gi, x| if x > f { gi } else { T::ZERO })?;
                    accumulate(&mut grads[*a], ga);
                }
                Op::Mean(a) => {
                    let (r, c) = shapes[*a];
                    let share = T::from_f64(g.get(0, 0).to_f64() / (r * c).max(1) as f64);
                    accumulate(&mut grads[*a], Tensor::filled(r, c, share));
                }
                Op::SoftmaxXent {
                    logits,
                    labels,
                    probs,
                } => {
                    let upstream = g.get(0, 0).to_f64() / labels.len().max(1) as f64;
                    let mut gl = probs.clone();
                    for (r, &label) in labels.iter().enumerate() {
                        let row = gl.row_mut(r);
                        row[label] = T::from_f64(row[label].to_f64() - 1.0);
                        for v in row.iter_mut() {
                            *v = T::from_f64(v.to_f64() * upstream);
                        }
                    }
                    accumulate(&mut grads[*logits], gl);
                }
                Op::BlockLinear { x, w, block } => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    let mut gw = Tensor::zeros(wv.rows(), wv.cols());
                    for b in 0..xv.rows() {
                        for c in 0..wv.rows() {
                            let gi = g.get(b, c);
                            for j in 0..*block {
                                let col = c * block + j;
                                gx.set(b, col, gi * wv.get(c, j));
                                let cur = gw.get(c, j);
                                gw.set(c, j, cur + gi * xv.get(b, col));
                            }
                        }
                    }
                    accumulate(&mut grads[*x], gx);
                    accumulate(&mut grads[*w], gw);
                }
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

/// Stable softmax of one logit row, and the cross-entropy against `label`.
pub fn softmax_xent_row<T: Real>(logits: &[T], label: usize) -> (Vec<f64>, f64) {
    let max = logits
        .iter()
        .map(|v| v.to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| libm::exp(v.to_f64() - max)).collect();
    let sum: f64 = exps.iter().sum();
    let loss = libm::log(sum) - (logits[label].to_f64() - max);
    (exps.into_iter().map(|e| e / sum).collect(), loss)
}

/// Forward evaluation of the block-diagonal combiner (see [`Tape::block_linear`]).
pub fn block_linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, block: usize) -> Result<Tensor<T>> {
    if w.cols() != block || x.cols() != w.rows() * block {
        return Err(Error::Shape {
            op: "block_linear",
            left: x.shape(),
            right: w.shape(),
        });
    }
    let mut out = Tensor::zeros(x.rows(), w.rows());
    for b in 0..x.rows() {
        for c in 0..w.rows() {
            let s: f64 = (0..block)
                .map(|j| x.get(b, c * block + j).to_f64() * w.get(c, j).to_f64())
                .sum();
            out.set(b, c, T::from_f64(s));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random(rng: &mut SeededRng, r: usize, c: usize) -> Tensor<f64> {
        let data = (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        Tensor::from_vec(r, c, data).unwrap()
    }

    #[test]
    fn square_has_gradient_two_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_vector(vec![3.0f64]));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).data(), &[6.0]);
    }

    #[test]
    fn unrelated_leaf_gets_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_vector(vec![3.0f64]));
        let y = tape.leaf(Tensor::row_vector(vec![1.0f64, 2.0]));
        let z = tape.mul(x, x).unwrap();
        let g = tape.backward(z).unwrap();
        assert_eq!(g.wrt(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_foreign_node() {
        let mut other = Tape::<f64>::new();
        for _ in 0..5 {
            other.constant(Tensor::zeros(1, 1));
        }
        let foreign = other.constant(Tensor::zeros(1, 1));
        let mut tape = Tape::<f64>::new();
        tape.leaf(Tensor::zeros(1, 1));
        assert!(matches!(tape.backward(foreign), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(2, 1));
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn cross_entropy_identities() {
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::zeros(1, 10));
        let l = tape.softmax_cross_entropy(z, &[3]).unwrap();
        assert!((tape.value(l).get(0, 0) - libm::log(10.0)).abs() < 1e-12);

        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::row_vector(vec![1000.0, 0.0]));
        let l = tape.softmax_cross_entropy(z, &[0]).unwrap();
        assert!(tape.value(l).get(0, 0).abs() < 1e-12);

        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::zeros(1, 2));
        let l = tape.softmax_cross_entropy(z, &[0]).unwrap();
        let g = tape.backward(l).unwrap().wrt(z);
        assert_eq!(g.data(), &[-0.5, 0.5]);

        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::zeros(1, 2));
        assert!(matches!(
            tape.softmax_cross_entropy(z, &[2]),
            Err(Error::Index { .. })
        ));
    }

    /// Central finite differences over every entry of every leaf.
    fn check_against_fd(
        seed: u64,
        leaves: Vec<Tensor<f64>>,
        f: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
    ) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();
        let eval = |ls: &[Tensor<f64>]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = ls.iter().map(|x| t.leaf(x.clone())).collect();
            let l = f(&mut t, &vs);
            t.value(l).get(0, 0)
        };
        // Central differences at h and h/2, combined by one Richardson step.
        let central = |li: usize, k: usize, h: f64| {
            let mut plus = leaves.clone();
            plus[li].data_mut()[k] += h;
            let mut minus = leaves.clone();
            minus[li].data_mut()[k] -= h;
            (eval(&plus) - eval(&minus)) / (2.0 * h)
        };
        let h = 1e-3;
        for (li, leaf) in leaves.iter().enumerate() {
            let g = grads.wrt(vars[li]);
            for k in 0..leaf.data().len() {
                let fd = (4.0 * central(li, k, h / 2.0) - central(li, k, h)) / 3.0;
                let an = g.data()[k];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "seed {seed} leaf {li} entry {k}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = SeededRng::new(seed);
            let leaves = vec![
                random(&mut rng, 3, 4),
                random(&mut rng, 4, 5),
                random(&mut rng, 1, 5),
                random(&mut rng, 2, 4),
            ];
            check_against_fd(seed, leaves, |t, v| {
                let a = t.matmul(v[0], v[1]).unwrap();
                let a = t.add_row(a, v[2]).unwrap();
                let s = t.sigmoid(a);
                let th = t.tanh(a);
                let m = t.mul(s, th).unwrap();
                let m = t.affine(m, -0.7, 0.3);
                let e = t.gather(v[3], &[1, 0, 1]).unwrap();
                let p = t.matmul(e, v[1]).unwrap();
                let d = t.sub(m, p).unwrap();
                let n = t.row_norm(d);
                let den = t.row_norm(m);
                let den = t.clamp_min(den, 1e-6);
                let q = t.div(n, den).unwrap();
                t.mean(q)
            });
        }
    }

    #[test]
    fn classifier_head_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = SeededRng::new(100 + seed);
            let leaves = vec![
                random(&mut rng, 4, 6),
                random(&mut rng, 3, 2),
                random(&mut rng, 1, 3),
            ];
            check_against_fd(seed, leaves, |t, v| {
                let x = t.tanh(v[0]);
                let z = t.block_linear(x, v[1], 2).unwrap();
                let z = t.add_row(z, v[2]).unwrap();
                t.softmax_cross_entropy(z, &[0, 2, 1, 2]).unwrap()
            });
        }
    }
}
