//! Embedding -> GRU -> dense -> block-linear -> softmax classifier.
//!
//! The GRU update for word vector `w` acting on state `h` is
//!
//! ```text
//! z  = sigmoid(w W_z + h U_z + b_z)
//! r  = sigmoid(w W_r + h U_r + b_r)
//! h~ = tanh(w W_c + (r * h) U_c + b_c)
//! h' = (1 - z) * h + z * h~
//! ```
//!
//! and the head is `tanh(h D + d)` followed by one linear combiner per
//! class over that class's dedicated block of dense neurons.

use alloc::vec;
use alloc::vec::Vec;

use crate::adam::{AdamConfig, AdamState};
use crate::corpus::{encode_batches, EncodedBatch, EncodedDoc};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tape::{block_linear, softmax_xent_row, Tape, Var};
use crate::tensor::{norm, Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    pub neurons_per_class: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
}

impl ModelConfig {
    pub fn new(embedding_dim: usize, hidden_dim: usize, classes: usize) -> Self {
        Self {
            embedding_dim,
            hidden_dim,
            classes,
            neurons_per_class: 10,
            epochs: 10,
            batch_size: 32,
            seed: 0,
            optimizer: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config(
                "embedding and hidden dimensions must be at least 1",
            ));
        }
        if self.classes < 2 {
            return Err(Error::config("at least 2 classes are required"));
        }
        if self.neurons_per_class == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "neurons_per_class and batch_size must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn dense_width(&self) -> usize {
        self.neurons_per_class * self.classes
    }
}

pub const PARAM_NAMES: [&str; 14] = [
    "embedding",
    "w_z",
    "w_r",
    "w_c",
    "u_z",
    "u_r",
    "u_c",
    "b_z",
    "b_r",
    "b_c",
    "dense",
    "dense_bias",
    "combiner",
    "combiner_bias",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub embedding: Tensor<T>,
    pub w_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_c: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_c: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_c: Tensor<T>,
    pub dense: Tensor<T>,
    pub dense_bias: Tensor<T>,
    pub combiner: Tensor<T>,
    pub combiner_bias: Tensor<T>,
}

/// Shapes of the parameters, in [`PARAM_NAMES`] order.
pub fn param_shapes(config: &ModelConfig, vocab_size: usize) -> [(usize, usize); 14] {
    let (m, n, c, k) = (
        config.embedding_dim,
        config.hidden_dim,
        config.classes,
        config.neurons_per_class,
    );
    [
        (vocab_size, m),
        (m, n),
        (m, n),
        (m, n),
        (n, n),
        (n, n),
        (n, n),
        (1, n),
        (1, n),
        (1, n),
        (n, k * c),
        (1, k * c),
        (c, k),
        (1, c),
    ]
}

impl<T: Real> ModelParams<T> {
    pub fn tensors(&self) -> [&Tensor<T>; 14] {
        [
            &self.embedding,
            &self.w_z,
            &self.w_r,
            &self.w_c,
            &self.u_z,
            &self.u_r,
            &self.u_c,
            &self.b_z,
            &self.b_r,
            &self.b_c,
            &self.dense,
            &self.dense_bias,
            &self.combiner,
            &self.combiner_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 14] {
        [
            &mut self.embedding,
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_c,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_c,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_c,
            &mut self.dense,
            &mut self.dense_bias,
            &mut self.combiner,
            &mut self.combiner_bias,
        ]
    }

    /// Builds parameters from tensors in [`PARAM_NAMES`] order.
    pub fn from_tensors(mut ts: Vec<Tensor<T>>) -> Result<Self> {
        if ts.len() != 14 {
            return Err(Error::config("expected 14 parameter tensors"));
        }
        let mut it = ts.drain(..);
        let mut next = || it.next().ok_or_else(|| Error::config("missing tensor"));
        Ok(Self {
            embedding: next()?,
            w_z: next()?,
            w_r: next()?,
            w_c: next()?,
            u_z: next()?,
            u_r: next()?,
            u_c: next()?,
            b_z: next()?,
            b_r: next()?,
            b_c: next()?,
            dense: next()?,
            dense_bias: next()?,
            combiner: next()?,
            combiner_bias: next()?,
        })
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let ts = self.tensors().iter().map(|t| t.cast()).collect();
        ModelParams::from_tensors(ts).expect("same arity")
    }
}

/// Handles to the GRU parameters on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_c: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_c: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_c: Var,
}

impl GruVars {
    /// Registers the GRU weights as constants (frozen model).
    pub fn constants<T: Real>(tape: &mut Tape<T>, p: &ModelParams<T>) -> Self {
        Self {
            w_z: tape.constant(p.w_z.clone()),
            w_r: tape.constant(p.w_r.clone()),
            w_c: tape.constant(p.w_c.clone()),
            u_z: tape.constant(p.u_z.clone()),
            u_r: tape.constant(p.u_r.clone()),
            u_c: tape.constant(p.u_c.clone()),
            b_z: tape.constant(p.b_z.clone()),
            b_r: tape.constant(p.b_r.clone()),
            b_c: tape.constant(p.b_c.clone()),
        }
    }
}

/// Records one GRU update on the tape; `x` is `B x m`, `h` is `B x n`.
pub fn gru_step_on_tape<T: Real>(tape: &mut Tape<T>, g: &GruVars, x: Var, h: Var) -> Result<Var> {
    let gate = |tape: &mut Tape<T>, w: Var, u: Var, b: Var, state: Var| -> Result<Var> {
        let xw = tape.matmul(x, w)?;
        let hu = tape.matmul(state, u)?;
        let s = tape.add(xw, hu)?;
        tape.add_row(s, b)
    };
    let zs = gate(tape, g.w_z, g.u_z, g.b_z, h)?;
    let z = tape.sigmoid(zs);
    let rs = gate(tape, g.w_r, g.u_r, g.b_r, h)?;
    let r = tape.sigmoid(rs);
    let rh = tape.mul(r, h)?;
    let cs = gate(tape, g.w_c, g.u_c, g.b_c, rh)?;
    let cand = tape.tanh(cs);
    let keep = tape.affine(z, -T::ONE, T::ONE);
    let kept = tape.mul(keep, h)?;
    let moved = tape.mul(z, cand)?;
    tape.add(kept, moved)
}

/// Dense hidden states harvested from forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenPool<T> {
    states: Tensor<T>,
    /// `(document index, position)` of each state; position 0 is `h0`.
    pub sources: Vec<(usize, usize)>,
}

impl<T: Real> HiddenPool<T> {
    pub fn from_states(states: Tensor<T>, sources: Vec<(usize, usize)>) -> Result<Self> {
        if states.rows() != sources.len() {
            return Err(Error::config("pool sources must match states"));
        }
        if states.rows() == 0 {
            return Err(Error::config("hidden pool is empty"));
        }
        if (0..states.rows()).any(|r| norm(states.row(r)) == 0.0) {
            return Err(Error::degenerate("hidden pool contains the zero vector"));
        }
        Ok(Self { states, sources })
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    pub fn state(&self, i: usize) -> &[T] {
        self.states.row(i)
    }

    pub fn states(&self) -> &Tensor<T> {
        &self.states
    }

    pub fn sample<'a>(&'a self, rng: &mut SeededRng) -> &'a [T] {
        self.state(rng.below(self.len()))
    }

    pub fn min_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| norm(self.state(i)))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    config: ModelConfig,
    vocab_size: usize,
    params: ModelParams<T>,
    frozen: bool,
}

fn uniform_tensor<T: Real>(rng: &mut SeededRng, shape: (usize, usize), bound: f64) -> Tensor<T> {
    let data = (0..shape.0 * shape.1)
        .map(|_| T::from_f64(rng.uniform_range(-bound, bound)))
        .collect();
    Tensor::from_vec(shape.0, shape.1, data).expect("shape matches data")
}

impl<T: Real> ModelState<T> {
    /// Fresh parameters, uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    /// Embedding rows read a one-hot input, so their fan-in is 1.
    pub fn init(config: &ModelConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        if vocab_size < 2 {
            return Err(Error::config("vocabulary must contain the specials"));
        }
        let (m, n, k) = (
            config.embedding_dim as f64,
            config.hidden_dim as f64,
            config.neurons_per_class as f64,
        );
        let fan_in = [1.0, m, m, m, n, n, n, n, n, n, n, n, k, k];
        let mut rng = SeededRng::new(config.seed);
        let shapes = param_shapes(config, vocab_size);
        let ts = shapes
            .iter()
            .zip(fan_in)
            .map(|(&s, f)| uniform_tensor(&mut rng, s, 1.0 / libm::sqrt(f)))
            .collect();
        Ok(Self {
            config: config.clone(),
            vocab_size,
            params: ModelParams::from_tensors(ts)?,
            frozen: false,
        })
    }

    /// Wraps existing parameters after checking their shapes.
    pub fn from_params(
        config: &ModelConfig,
        vocab_size: usize,
        params: ModelParams<T>,
        frozen: bool,
    ) -> Result<Self> {
        config.validate()?;
        for ((t, expect), name) in params
            .tensors()
            .iter()
            .zip(param_shapes(config, vocab_size))
            .zip(PARAM_NAMES)
        {
            if t.shape() != expect {
                return Err(Error::Shape {
                    op: name,
                    left: expect,
                    right: t.shape(),
                });
            }
        }
        Ok(Self {
            config: config.clone(),
            vocab_size,
            params,
            frozen,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    /// Mutable parameters; refused once frozen.
    pub fn params_mut(&mut self) -> Result<&mut ModelParams<T>> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(&mut self.params)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn cast<U: Real>(&self) -> ModelState<U> {
        ModelState {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            params: self.params.cast(),
            frozen: self.frozen,
        }
    }

    /// FNV-1a over every parameter bit pattern; equal states hash equal.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.params.tensors() {
            for v in t.data() {
                for b in v.to_bits_u64().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// `h0 = (1/sqrt(n), .., 1/sqrt(n))`.
    pub fn initial_state(&self) -> Vec<T> {
        let n = self.config.hidden_dim;
        vec![T::from_f64(1.0 / libm::sqrt(n as f64)); n]
    }

    pub fn embedding_row(&self, word_id: usize) -> Result<&[T]> {
        if word_id >= self.vocab_size {
            return Err(Error::Index {
                what: "word id",
                index: word_id,
                bound: self.vocab_size,
            });
        }
        Ok(self.params.embedding.row(word_id))
    }

    /// Batched GRU update for arbitrary input vectors (`B x m`) and states (`B x n`).
    pub fn step_batch(&self, inputs: &Tensor<T>, h: &Tensor<T>) -> Result<Tensor<T>> {
        let p = &self.params;
        let gate =
            |w: &Tensor<T>, u: &Tensor<T>, b: &Tensor<T>, state: &Tensor<T>| -> Result<Tensor<T>> {
                inputs.matmul(w)?.add(&state.matmul(u)?)?.add_row(b)
            };
        let z = gate(&p.w_z, &p.u_z, &p.b_z, h)?.sigmoid();
        let r = gate(&p.w_r, &p.u_r, &p.b_r, h)?.sigmoid();
        let rh = r.mul(h)?;
        let cand = gate(&p.w_c, &p.u_c, &p.b_c, &rh)?.tanh();
        z.affine(-T::ONE, T::ONE).mul(h)?.add(&z.mul(&cand)?)
    }

    /// `R_x h` for a free input vector `x` of length m.
    pub fn act(&self, x: &[T], h: &[T]) -> Result<Vec<T>> {
        let xi = Tensor::row_vector(x.to_vec());
        let hi = Tensor::row_vector(h.to_vec());
        Ok(self.step_batch(&xi, &hi)?.into_data())
    }

    /// `R_w h` for vocabulary word `word_id`.
    pub fn gru_cell(&self, word_id: usize, h: &[T]) -> Result<Vec<T>> {
        let x = self.embedding_row(word_id)?.to_vec();
        self.act(&x, h)
    }

    /// `gamma_w h = h - R_w h`.
    pub fn gamma(&self, word_id: usize, h: &[T]) -> Result<Vec<T>> {
        let next = self.gru_cell(word_id, h)?;
        Ok(h.iter().zip(next).map(|(&a, b)| a - b).collect())
    }

    /// Trajectory `[h0, h1, .., hT]` over the sequence.
    pub fn run_sequence(&self, word_ids: &[usize]) -> Result<Vec<Vec<T>>> {
        let mut traj = Vec::with_capacity(word_ids.len() + 1);
        traj.push(self.initial_state());
        for &w in word_ids {
            let next = self.gru_cell(w, traj.last().expect("non-empty"))?;
            traj.push(next);
        }
        Ok(traj)
    }

    /// Applies the sequence starting from `h` rather than `h0`.
    pub fn run_from(&self, word_ids: &[usize], h: &[T]) -> Result<Vec<T>> {
        let mut state = h.to_vec();
        for &w in word_ids {
            state = self.gru_cell(w, &state)?;
        }
        Ok(state)
    }

    /// Class logits for final states `h` (`B x n` -> `B x C`).
    pub fn head_logits(&self, h: &Tensor<T>) -> Result<Tensor<T>> {
        let p = &self.params;
        let act = h.matmul(&p.dense)?.add_row(&p.dense_bias)?.tanh();
        block_linear(&act, &p.combiner, self.config.neurons_per_class)?.add_row(&p.combiner_bias)
    }

    pub fn forward_logits(&self, word_ids: &[usize]) -> Result<Vec<T>> {
        let traj = self.run_sequence(word_ids)?;
        let last = Tensor::row_vector(traj.last().expect("non-empty").clone());
        Ok(self.head_logits(&last)?.into_data())
    }

    /// Mean cross-entropy of a padded batch, recorded on `tape` with every
    /// parameter registered as a leaf. Returns the loss and the leaves in
    /// [`PARAM_NAMES`] order.
    pub fn batch_loss_on_tape(
        &self,
        tape: &mut Tape<T>,
        batch: &EncodedBatch,
    ) -> Result<(Var, [Var; 14])> {
        let c = self.config.classes;
        for &label in &batch.labels {
            if label >= c {
                return Err(Error::Index {
                    what: "label",
                    index: label,
                    bound: c,
                });
            }
        }
        let leaves = self.params.tensors().map(|t| tape.leaf(t.clone()));
        let [emb, w_z, w_r, w_c, u_z, u_r, u_c, b_z, b_r, b_c, dense, dense_bias, comb, comb_bias] =
            leaves;
        let g = GruVars {
            w_z,
            w_r,
            w_c,
            u_z,
            u_r,
            u_c,
            b_z,
            b_r,
            b_c,
        };
        let b = batch.batch_size();
        let h0 = self.initial_state();
        let mut h = tape.constant(Tensor::from_rows(&vec![h0; b])?);
        for t in 0..batch.width {
            let x = tape.gather(emb, &batch.column(t))?;
            h = gru_step_on_tape(tape, &g, x, h)?;
        }
        let d = tape.matmul(h, dense)?;
        let d = tape.add_row(d, dense_bias)?;
        let d = tape.tanh(d);
        let z = tape.block_linear(d, comb, self.config.neurons_per_class)?;
        let z = tape.add_row(z, comb_bias)?;
        let loss = tape.softmax_cross_entropy(z, &batch.labels)?;
        Ok((loss, leaves))
    }

    /// Loss of a batch and its gradient for every parameter.
    pub fn loss_and_gradients(&self, batch: &EncodedBatch) -> Result<(f64, Vec<Tensor<T>>)> {
        let mut tape = Tape::new();
        let (loss, leaves) = self.batch_loss_on_tape(&mut tape, batch)?;
        let value = tape.value(loss).get(0, 0).to_f64();
        let grads = tape.backward(loss)?;
        Ok((value, leaves.iter().map(|&v| grads.wrt(v)).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

/// Argmax accuracy and mean cross-entropy; ties go to the lowest class index.
pub fn evaluate<T: Real>(state: &ModelState<T>, docs: &[EncodedDoc]) -> Result<Evaluation> {
    if docs.is_empty() {
        return Err(Error::config("cannot evaluate an empty split"));
    }
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    for d in docs {
        let logits = state.forward_logits(&d.ids)?;
        if d.label >= logits.len() {
            return Err(Error::Index {
                what: "label",
                index: d.label,
                bound: logits.len(),
            });
        }
        let mut best = 0;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        if best == d.label {
            correct += 1;
        }
        total_loss += softmax_xent_row(&logits, d.label).1;
    }
    Ok(Evaluation {
        accuracy: correct as f64 / docs.len() as f64,
        mean_loss: total_loss / docs.len() as f64,
    })
}

/// End-to-end training with shuffled mini-batches.
///
/// Padding ids inside a batch are fed through the GRU like ordinary
/// words. Metrics are recorded before training (epoch 0) and after every
/// epoch; validation metrics only when the validation split is non-empty.
pub fn train<T: Real>(
    config: &ModelConfig,
    vocab_size: usize,
    train_docs: &[EncodedDoc],
    validation: &[EncodedDoc],
) -> Result<(ModelState<T>, Vec<EpochMetrics>)> {
    fit(
        ModelState::<T>::init(config, vocab_size)?,
        train_docs,
        validation,
    )
}

/// Trains an existing, unfrozen model (for example one whose embedding
/// rows were imported) with its own configuration.
pub fn fit<T: Real>(
    mut state: ModelState<T>,
    train_docs: &[EncodedDoc],
    validation: &[EncodedDoc],
) -> Result<(ModelState<T>, Vec<EpochMetrics>)> {
    if train_docs.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    if state.is_frozen() {
        return Err(Error::Frozen);
    }
    let config = state.config().clone();
    let vocab_size = state.vocab_size();
    let mut adam = AdamState::new(config.optimizer, &param_shapes(&config, vocab_size));
    let mut rng = SeededRng::new(crate::rng::derive_seed(config.seed, &[0x7261_696e]));
    let mut history = Vec::new();
    let record =
        |state: &ModelState<T>, epoch: usize, history: &mut Vec<EpochMetrics>| -> Result<()> {
            let e = evaluate(state, train_docs)?;
            history.push(EpochMetrics {
                epoch,
                split: Split::Train,
                loss: e.mean_loss,
                accuracy: e.accuracy,
            });
            if !validation.is_empty() {
                let e = evaluate(state, validation)?;
                history.push(EpochMetrics {
                    epoch,
                    split: Split::Validation,
                    loss: e.mean_loss,
                    accuracy: e.accuracy,
                });
            }
            Ok(())
        };
    record(&state, 0, &mut history)?;
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let shuffled: Vec<EncodedDoc> = order.iter().map(|&i| train_docs[i].clone()).collect();
        for batch in encode_batches(&shuffled, config.batch_size)? {
            let (_, grads) = state.loss_and_gradients(&batch)?;
            let params = state.params_mut()?;
            let mut ts = params.tensors_mut();
            adam.step(&mut ts, &grads)?;
        }
        record(&state, epoch, &mut history)?;
    }
    Ok((state, history))
}

/// Freezes the model and collects every intermediate state of every test
/// document, `h0` included.
pub fn freeze_and_harvest<T: Real>(
    mut state: ModelState<T>,
    docs: &[EncodedDoc],
) -> Result<(ModelState<T>, HiddenPool<T>)> {
    if docs.is_empty() {
        return Err(Error::config(
            "cannot harvest hidden states from an empty split",
        ));
    }
    state.freeze();
    let mut rows = Vec::new();
    let mut sources = Vec::new();
    for (di, d) in docs.iter().enumerate() {
        for (pos, h) in state.run_sequence(&d.ids)?.into_iter().enumerate() {
            if norm(&h) > 0.0 {
                rows.push(h);
                sources.push((di, pos));
            }
        }
    }
    let pool = HiddenPool::from_states(Tensor::from_rows(&rows)?, sources)?;
    Ok((state, pool))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ModelState<f64> {
        let mut cfg = ModelConfig::new(3, 4, 3);
        cfg.neurons_per_class = 2;
        cfg.seed = seed;
        ModelState::init(&cfg, 6).unwrap()
    }

    fn zeroed(state: &mut ModelState<f64>) {
        for t in state.params_mut().unwrap().tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn zero_weights_halve_state() {
        let mut s = tiny(1);
        zeroed(&mut s);
        let h = vec![0.2, -0.4, 0.6, 1.0];
        let out = s.gru_cell(2, &h).unwrap();
        for (o, x) in out.iter().zip(&h) {
            assert_eq!(*o, 0.5 * x);
        }
        let g = s.gamma(2, &h).unwrap();
        for (o, x) in g.iter().zip(&h) {
            assert_eq!(*o, 0.5 * x);
        }
    }

    #[test]
    fn out_of_range_word() {
        let s = tiny(1);
        assert!(matches!(
            s.gru_cell(6, &s.initial_state()),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn trajectory_lengths() {
        let s = tiny(2);
        let t = s.run_sequence(&[]).unwrap();
        assert_eq!(t, vec![s.initial_state()]);
        assert_eq!(s.run_sequence(&[3]).unwrap().len(), 2);
        let ab = s.run_sequence(&[2, 4]).unwrap();
        let manual = s
            .gru_cell(4, &s.gru_cell(2, &s.initial_state()).unwrap())
            .unwrap();
        assert_eq!(ab[2], manual);
        let norm0 = norm(&s.initial_state());
        assert!((norm0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_head_gives_biases() {
        let mut s = tiny(3);
        {
            let p = s.params_mut().unwrap();
            p.dense.data_mut().iter_mut().for_each(|v| *v = 0.0);
            p.combiner.data_mut().iter_mut().for_each(|v| *v = 0.0);
            p.combiner_bias = Tensor::row_vector(vec![0.1, -0.2, 0.3]);
        }
        assert_eq!(s.forward_logits(&[2, 3]).unwrap(), vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn block_permutation_invariance() {
        let s = tiny(4);
        let before = s.forward_logits(&[2, 5, 1]).unwrap();
        let mut t = s.clone();
        {
            let p = t.params_mut().unwrap();
            // Swap the two neurons of class 1's block and its combiner weights.
            let (a, b) = (2, 3);
            for r in 0..p.dense.rows() {
                let (x, y) = (p.dense.get(r, a), p.dense.get(r, b));
                p.dense.set(r, a, y);
                p.dense.set(r, b, x);
            }
            let (x, y) = (p.dense_bias.get(0, a), p.dense_bias.get(0, b));
            p.dense_bias.set(0, a, y);
            p.dense_bias.set(0, b, x);
            let (x, y) = (p.combiner.get(1, 0), p.combiner.get(1, 1));
            p.combiner.set(1, 0, y);
            p.combiner.set(1, 1, x);
        }
        let after = t.forward_logits(&[2, 5, 1]).unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_rejects_mutation() {
        let mut s = tiny(5);
        s.freeze();
        assert_eq!(s.params_mut().unwrap_err(), Error::Frozen);
    }

    #[test]
    fn harvest_counts_states() {
        let s = tiny(6);
        let docs = [EncodedDoc {
            ids: vec![2, 3, 4, 5, 2],
            label: 0,
        }];
        let (frozen, pool) = freeze_and_harvest(s, &docs).unwrap();
        assert!(frozen.is_frozen());
        assert_eq!(pool.len(), 6);
        assert!(pool.min_norm() > 0.0);
        assert!(freeze_and_harvest(tiny(6), &[]).is_err());
    }

    #[test]
    fn uniform_logits_accuracy_is_class_zero_frequency() {
        let mut s = tiny(7);
        zeroed(&mut s);
        let docs: Vec<EncodedDoc> = (0..9)
            .map(|i| EncodedDoc {
                ids: vec![2 + i % 3],
                label: i % 3,
            })
            .collect();
        let e = evaluate(&s, &docs).unwrap();
        assert!((e.accuracy - 1.0 / 3.0).abs() < 1e-12);
        assert!((e.mean_loss - libm::log(3.0)).abs() < 1e-12);
        assert!(evaluate(&s, &[]).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut cfg = ModelConfig::new(3, 4, 2);
        cfg.neurons_per_class = 2;
        cfg.epochs = 2;
        cfg.optimizer.lr = 0.0;
        let docs: Vec<EncodedDoc> = (0..6)
            .map(|i| EncodedDoc {
                ids: vec![2 + i % 2, 3],
                label: i % 2,
            })
            .collect();
        let (state, hist) = train::<f64>(&cfg, 5, &docs, &[]).unwrap();
        assert_eq!(
            state.params(),
            ModelState::<f64>::init(&cfg, 5).unwrap().params()
        );
        assert!(hist.iter().all(|m| m.loss == hist[0].loss));
        assert!(train::<f64>(&cfg, 5, &[], &[]).is_err());
    }
}
