//! Searches for candidate words that satisfy algebraic axioms through a
//! frozen GRU.
//!
//! Every axiomatic loss has the same shape: a candidate `x` acts on a
//! *source* state and is compared with a *target* state,
//!
//! ```text
//! loss = |R_x s - t| / max(|t|, floor)
//! ```
//!
//! | axiom      | source `s`     | target `t`                     | floor |
//! |------------|----------------|--------------------------------|-------|
//! | identity   | `h`            | `h`                            | 0     |
//! | inverse    | `R_w h`        | `h`                            | 0     |
//! | closure    | `h`            | `R_w2 R_w1 h`                  | 0     |
//! | commutator | `h`            | `R_w2 R_w1 h - R_w1 R_w2 h`    | 1e-6  |
//!
//! Composite tests replace the word or pair by a whole document acting on
//! `h0`. With a projection `P`, the output `R_x s` and the target are both
//! right-multiplied by `P`; the recurrence itself is never projected.

use alloc::format;
use alloc::vec::Vec;

use crate::adam::{AdamConfig, AdamState};
use crate::corpus::{EncodedDoc, PAD_ID, UNK_ID};
use crate::error::{Error, Result};
use crate::model::{gru_step_on_tape, GruVars, HiddenPool, ModelState};
use crate::rng::{derive_seed, SeededRng};
use crate::tape::Tape;
use crate::tensor::{norm, Real, Tensor};

/// Denominator floor of the commutator loss.
pub const COMMUTATOR_FLOOR: f64 = 1e-6;

/// Stand-in floor for the other losses while a projection is trained, so a
/// collapsing projection cannot divide by zero mid-optimization.
const TRAINING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AxiomKind {
    Identity,
    Inverse,
    Closure,
    Commutator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestKind {
    ArbitraryIdentity,
    ArbitraryInverse,
    ArbitraryClosure,
    ArbitraryCommutator,
    IntraSentenceClosure,
    CompositeClosure,
    CompositeInverse,
}

impl TestKind {
    pub const ALL: [TestKind; 7] = [
        TestKind::ArbitraryIdentity,
        TestKind::ArbitraryInverse,
        TestKind::ArbitraryClosure,
        TestKind::ArbitraryCommutator,
        TestKind::IntraSentenceClosure,
        TestKind::CompositeClosure,
        TestKind::CompositeInverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::ArbitraryIdentity => "arbitrary_identity",
            TestKind::ArbitraryInverse => "arbitrary_inverse",
            TestKind::ArbitraryClosure => "arbitrary_closure",
            TestKind::ArbitraryCommutator => "arbitrary_commutator",
            TestKind::IntraSentenceClosure => "intra_sentence_closure",
            TestKind::CompositeClosure => "composite_closure",
            TestKind::CompositeInverse => "composite_inverse",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn axiom(self) -> AxiomKind {
        match self {
            TestKind::ArbitraryIdentity => AxiomKind::Identity,
            TestKind::ArbitraryInverse | TestKind::CompositeInverse => AxiomKind::Inverse,
            TestKind::ArbitraryClosure
            | TestKind::IntraSentenceClosure
            | TestKind::CompositeClosure => AxiomKind::Closure,
            TestKind::ArbitraryCommutator => AxiomKind::Commutator,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Instances per optimization step (K).
    pub samples_per_step: usize,
    /// Words, pairs or documents given their own candidate.
    pub word_pair_samples: usize,
    /// Size of the fixed training instance set for pool-based tests.
    pub train_instances: usize,
    /// Size of the held-out evaluation set for pool-based tests.
    pub eval_instances: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            lr: 1e-2,
            samples_per_step: 64,
            word_pair_samples: 32,
            train_instances: 2048,
            eval_instances: 256,
            threshold: 0.01,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold <= 0.0 {
            return Err(Error::config("satisfied threshold must be positive"));
        }
        if self.samples_per_step == 0 || self.word_pair_samples == 0 {
            return Err(Error::config("sample counts must be at least 1"));
        }
        if self.train_instances == 0 || self.eval_instances == 0 {
            return Err(Error::config("instance counts must be at least 1"));
        }
        Ok(())
    }

    /// Seed of the stream owned by one test kind.
    pub fn test_seed(&self, test: TestKind) -> u64 {
        derive_seed(self.seed, &[test.index() as u64])
    }
}

/// Frozen model plus the data probes draw from.
#[derive(Debug, Clone, Copy)]
pub struct ProbeEnv<'a, T> {
    pub model: &'a ModelState<T>,
    pub pool: &'a HiddenPool<T>,
    /// Documents for intra-sentence and composite tests (the test split).
    pub docs: &'a [EncodedDoc],
}

impl<'a, T: Real> ProbeEnv<'a, T> {
    pub fn new(
        model: &'a ModelState<T>,
        pool: &'a HiddenPool<T>,
        docs: &'a [EncodedDoc],
    ) -> Result<Self> {
        if !model.is_frozen() {
            return Err(Error::config("probes require a frozen model"));
        }
        if pool.is_empty() {
            return Err(Error::config("hidden pool is empty"));
        }
        if pool.dim() != model.hidden_dim() {
            return Err(Error::Shape {
                op: "probe_env",
                left: (1, model.hidden_dim()),
                right: (1, pool.dim()),
            });
        }
        Ok(Self { model, pool, docs })
    }
}

/// One `(candidate group, source, target)` instance of an axiomatic loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeInstance<T> {
    pub group: usize,
    pub source: Vec<T>,
    pub target: Vec<T>,
}

fn axpy_sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Source and target states for `kind` with context words `context`.
///
/// Identity takes no context; inverse and closure accept one word or any
/// sequence (applied left to right); the commutator takes exactly a pair.
pub fn axiom_states<T: Real>(
    model: &ModelState<T>,
    kind: AxiomKind,
    context: &[usize],
    h: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    match kind {
        AxiomKind::Identity => {
            if !context.is_empty() {
                return Err(Error::config("identity takes no context words"));
            }
            Ok((h.to_vec(), h.to_vec()))
        }
        AxiomKind::Inverse => {
            if context.is_empty() {
                return Err(Error::config("inverse needs at least one context word"));
            }
            Ok((model.run_from(context, h)?, h.to_vec()))
        }
        AxiomKind::Closure => {
            if context.is_empty() {
                return Err(Error::config("closure needs at least one context word"));
            }
            Ok((h.to_vec(), model.run_from(context, h)?))
        }
        AxiomKind::Commutator => {
            let [w1, w2] = context else {
                return Err(Error::config("commutator needs exactly two context words"));
            };
            let ab = model.run_from(&[*w1, *w2], h)?;
            let ba = model.run_from(&[*w2, *w1], h)?;
            Ok((h.to_vec(), axpy_sub(&ab, &ba)))
        }
    }
}

fn project<T: Real>(v: &[T], p: Option<&Tensor<T>>) -> Result<Vec<T>> {
    match p {
        None => Ok(v.to_vec()),
        Some(p) => Ok(Tensor::row_vector(v.to_vec()).matmul(p)?.into_data()),
    }
}

/// `|(R_x s)P - tP| / max(|tP|, floor)`; a zero denominator with zero floor
/// is rejected.
pub fn relative_residual<T: Real>(
    model: &ModelState<T>,
    x: &[T],
    source: &[T],
    target: &[T],
    floor: f64,
    projection: Option<&Tensor<T>>,
) -> Result<f64> {
    let out = project(&model.act(x, source)?, projection)?;
    let tgt = project(target, projection)?;
    let num = norm(&axpy_sub(&out, &tgt));
    let den = norm(&tgt).max(floor);
    if den == 0.0 {
        return Err(Error::degenerate("axiomatic loss denominator is zero"));
    }
    Ok(num / den)
}

pub fn floor_for(kind: AxiomKind) -> f64 {
    if kind == AxiomKind::Commutator {
        COMMUTATOR_FLOOR
    } else {
        0.0
    }
}

/// Axiomatic loss of candidate `x` at state `h`.
pub fn axiom_loss<T: Real>(
    model: &ModelState<T>,
    kind: AxiomKind,
    x: &[T],
    context: &[usize],
    h: &[T],
) -> Result<f64> {
    if x.len() != model.embedding_dim() || h.len() != model.hidden_dim() {
        return Err(Error::Shape {
            op: "axiom_loss",
            left: (x.len(), h.len()),
            right: (model.embedding_dim(), model.hidden_dim()),
        });
    }
    let (s, t) = axiom_states(model, kind, context, h)?;
    relative_residual(model, x, &s, &t, floor_for(kind), None)
}

/// Outcome of one probe optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult<T> {
    pub test: TestKind,
    /// One optimized candidate word per group (`groups x m`).
    pub candidates: Tensor<T>,
    /// Mean loss over the evaluation instances.
    pub final_loss: f64,
    pub satisfied: bool,
    pub instance_losses: Vec<f64>,
    /// Evaluation loss of the initial candidates.
    pub initial_loss: f64,
    /// Loss of the first optimization step's batch.
    pub initial_train_loss: f64,
    /// Running mean of the last (up to 100) batch losses.
    pub final_train_loss: f64,
    pub groups: usize,
    pub train_instances: usize,
    pub eval_instances: usize,
    pub epochs: usize,
    pub seed: u64,
    pub diverged: bool,
}

/// Fixed instance sets for one test.
#[derive(Debug, Clone)]
pub struct ProbeTask<T> {
    pub test: TestKind,
    pub groups: usize,
    pub floor: f64,
    pub train: Vec<ProbeInstance<T>>,
    pub eval: Vec<ProbeInstance<T>>,
    /// Context words of each group (empty for identity).
    pub contexts: Vec<Vec<usize>>,
}

fn eligible_words<T: Real>(model: &ModelState<T>) -> Result<Vec<usize>> {
    let words: Vec<usize> = (0..model.vocab_size())
        .filter(|&w| w != PAD_ID && w != UNK_ID)
        .collect();
    if words.is_empty() {
        return Err(Error::config("vocabulary has no ordinary words to probe"));
    }
    Ok(words)
}

fn distinct_pair(rng: &mut SeededRng, words: &[usize]) -> (usize, usize) {
    let a = rng.below(words.len());
    if words.len() == 1 {
        return (words[a], words[a]);
    }
    let mut b = rng.below(words.len() - 1);
    if b >= a {
        b += 1;
    }
    (words[a], words[b])
}

impl<T: Real> ProbeTask<T> {
    /// Samples candidate groups and their training/evaluation instances.
    pub fn build(env: &ProbeEnv<'_, T>, test: TestKind, config: &ProbeConfig) -> Result<Self> {
        config.validate()?;
        let model = env.model;
        let mut rng = SeededRng::new(derive_seed(config.test_seed(test), &[0]));
        let groups_wanted = config.word_pair_samples;
        let contexts: Vec<Vec<usize>> = match test {
            TestKind::ArbitraryIdentity => alloc::vec![Vec::new()],
            TestKind::ArbitraryInverse => {
                let mut words = eligible_words(model)?;
                rng.shuffle(&mut words);
                words.truncate(groups_wanted);
                words.into_iter().map(|w| alloc::vec![w]).collect()
            }
            TestKind::ArbitraryClosure | TestKind::ArbitraryCommutator => {
                let words = eligible_words(model)?;
                (0..groups_wanted)
                    .map(|_| {
                        let (a, b) = distinct_pair(&mut rng, &words);
                        alloc::vec![a, b]
                    })
                    .collect()
            }
            TestKind::IntraSentenceClosure => {
                let docs: Vec<&EncodedDoc> = env.docs.iter().filter(|d| d.ids.len() >= 2).collect();
                if docs.is_empty() {
                    return Err(Error::config("no document has two or more tokens"));
                }
                (0..groups_wanted)
                    .map(|_| {
                        let d = docs[rng.below(docs.len())];
                        let len = d.ids.len();
                        let i = rng.below(len);
                        let mut j = rng.below(len - 1);
                        if j >= i {
                            j += 1;
                        }
                        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                        alloc::vec![d.ids[lo], d.ids[hi]]
                    })
                    .collect()
            }
            TestKind::CompositeClosure | TestKind::CompositeInverse => {
                let mut docs: Vec<&EncodedDoc> =
                    env.docs.iter().filter(|d| d.ids.len() >= 2).collect();
                if docs.is_empty() {
                    return Err(Error::config("no document has two or more tokens"));
                }
                rng.shuffle(&mut docs);
                docs.truncate(groups_wanted);
                docs.into_iter().map(|d| d.ids.clone()).collect()
            }
        };
        let kind = test.axiom();
        let groups = contexts.len();
        let (train, eval) = match test {
            TestKind::CompositeClosure | TestKind::CompositeInverse => {
                let h0 = model.initial_state();
                let mut set = Vec::with_capacity(groups);
                for (g, ctx) in contexts.iter().enumerate() {
                    let (source, target) = axiom_states(model, kind, ctx, &h0)?;
                    set.push(ProbeInstance {
                        group: g,
                        source,
                        target,
                    });
                }
                (set.clone(), set)
            }
            _ => {
                let sample = |count: usize, rng: &mut SeededRng| -> Result<Vec<ProbeInstance<T>>> {
                    (0..count)
                        .map(|i| {
                            let g = i % groups;
                            let h = env.pool.sample(rng);
                            let (source, target) = axiom_states(model, kind, &contexts[g], h)?;
                            Ok(ProbeInstance {
                                group: g,
                                source,
                                target,
                            })
                        })
                        .collect()
                };
                let train = sample(config.train_instances, &mut rng)?;
                let mut eval_rng = SeededRng::new(derive_seed(config.test_seed(test), &[1]));
                let eval = sample(config.eval_instances, &mut eval_rng)?;
                (train, eval)
            }
        };
        Ok(Self {
            test,
            groups,
            floor: floor_for(kind),
            train,
            eval,
            contexts,
        })
    }
}

/// How a projection participates in an optimization.
#[derive(Debug, Clone)]
pub(crate) enum Projection<'p, T> {
    None,
    Frozen(&'p Tensor<T>),
    /// Optimized jointly with the candidates; the best evaluated iterate
    /// is kept.
    Trainable(Tensor<T>),
}

pub(crate) struct Optimized<T> {
    pub result: ProbeResult<T>,
    pub projection: Option<Tensor<T>>,
}

/// Per-instance losses of `candidates` on `set`.
pub(crate) fn instance_losses<T: Real>(
    model: &ModelState<T>,
    candidates: &Tensor<T>,
    set: &[ProbeInstance<T>],
    floor: f64,
    projection: Option<&Tensor<T>>,
) -> Result<Vec<f64>> {
    set.iter()
        .map(|inst| {
            relative_residual(
                model,
                candidates.row(inst.group),
                &inst.source,
                &inst.target,
                floor,
                projection,
            )
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Initial candidates: normal with standard deviation `1/sqrt(m)`.
pub fn initial_candidates<T: Real>(groups: usize, m: usize, seed: u64) -> Tensor<T> {
    let mut rng = SeededRng::new(seed);
    let std = 1.0 / libm::sqrt(m as f64);
    let data = (0..groups * m).map(|_| rng.normal_as::<T>(std)).collect();
    Tensor::from_vec(groups, m, data).expect("shape matches data")
}

const CHECK_EVERY: usize = 50;

pub(crate) fn optimize<T: Real>(
    model: &ModelState<T>,
    task: &ProbeTask<T>,
    config: &ProbeConfig,
    projection: Projection<'_, T>,
    warm_start: Option<&Tensor<T>>,
    seed: u64,
) -> Result<Optimized<T>> {
    let m = model.embedding_dim();
    if task.train.is_empty() || task.eval.is_empty() {
        return Err(Error::config(format!(
            "{}: no instances to optimize",
            task.test.name()
        )));
    }
    let mut candidates = match warm_start {
        Some(w) if w.shape() == (task.groups, m) => w.clone(),
        Some(w) => {
            return Err(Error::Shape {
                op: "warm_start",
                left: (task.groups, m),
                right: w.shape(),
            })
        }
        None => initial_candidates(task.groups, m, derive_seed(seed, &[2])),
    };
    let (frozen_p, mut trainable_p) = match projection {
        Projection::None => (None, None),
        Projection::Frozen(p) => (Some(p), None),
        Projection::Trainable(p) => (None, Some(p)),
    };
    if let Some(p) = frozen_p.or(trainable_p.as_ref()) {
        if p.rows() != model.hidden_dim() {
            return Err(Error::Shape {
                op: "projection",
                left: (model.hidden_dim(), p.cols()),
                right: p.shape(),
            });
        }
    }

    // With a fixed (or no) projection the projected targets and their
    // denominators are constants of the whole run.
    let fixed_targets: Vec<(Vec<T>, T)> = if trainable_p.is_none() {
        task.train
            .iter()
            .map(|inst| -> Result<(Vec<T>, T)> {
                let t = project(&inst.target, frozen_p)?;
                let den = norm(&t).max(task.floor).max(TRAINING_FLOOR);
                Ok((t, T::from_f64(den)))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let eval_p = |p: &Option<Tensor<T>>| p.as_ref().or(frozen_p).cloned();
    let initial_losses = instance_losses(
        model,
        &candidates,
        &task.eval,
        task.floor,
        eval_p(&trainable_p).as_ref(),
    )?;
    let initial_loss = mean(&initial_losses);

    let mut shapes = alloc::vec![candidates.shape()];
    if let Some(p) = &trainable_p {
        shapes.push(p.shape());
    }
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), &shapes);
    let mut batch_rng = SeededRng::new(derive_seed(seed, &[3]));
    let full_batch = task.train.len() <= config.samples_per_step;
    let mut batch_losses: Vec<f64> = Vec::with_capacity(config.epochs);
    let mut diverged = false;
    let mut best = (initial_loss, candidates.clone(), trainable_p.clone());

    let gru_params = model.params();
    for step in 0..config.epochs {
        let idx: Vec<usize> = if full_batch {
            (0..task.train.len()).collect()
        } else {
            (0..config.samples_per_step)
                .map(|_| batch_rng.below(task.train.len()))
                .collect()
        };
        let sources: Vec<&[T]> = idx
            .iter()
            .map(|&i| task.train[i].source.as_slice())
            .collect();
        let groups: Vec<usize> = idx.iter().map(|&i| task.train[i].group).collect();

        let mut tape = Tape::new();
        let gv = GruVars::constants(&mut tape, gru_params);
        let x_leaf = tape.leaf(candidates.clone());
        let p_leaf = trainable_p.as_ref().map(|p| tape.leaf(p.clone()));
        let s = tape.constant(Tensor::from_rows(&sources)?);
        let xs = tape.gather(x_leaf, &groups)?;
        let mut out = gru_step_on_tape(&mut tape, &gv, xs, s)?;
        let (tgt, den) = if let Some(pl) = p_leaf {
            let targets: Vec<&[T]> = idx
                .iter()
                .map(|&i| task.train[i].target.as_slice())
                .collect();
            let t = tape.constant(Tensor::from_rows(&targets)?);
            out = tape.matmul(out, pl)?;
            let tp = tape.matmul(t, pl)?;
            let tn = tape.row_norm(tp);
            let den = tape.clamp_min(tn, T::from_f64(task.floor.max(TRAINING_FLOOR)));
            (tp, den)
        } else {
            if let Some(p) = frozen_p {
                out = {
                    let pc = tape.constant(p.clone());
                    tape.matmul(out, pc)?
                };
            }
            let targets: Vec<&[T]> = idx.iter().map(|&i| fixed_targets[i].0.as_slice()).collect();
            let dens: Vec<T> = idx.iter().map(|&i| fixed_targets[i].1).collect();
            let t = tape.constant(Tensor::from_rows(&targets)?);
            let d = tape.constant(Tensor::from_vec(dens.len(), 1, dens)?);
            (t, d)
        };
        let diff = tape.sub(out, tgt)?;
        let num = tape.row_norm(diff);
        let ratio = tape.div(num, den)?;
        let loss = tape.mean(ratio);
        let loss_value = tape.value(loss).get(0, 0).to_f64();
        if !loss_value.is_finite() {
            diverged = true;
            break;
        }
        batch_losses.push(loss_value);
        let grads = tape.backward(loss)?;
        let gx = grads.wrt(x_leaf);
        match (&mut trainable_p, p_leaf) {
            (Some(p), Some(pl)) => {
                let gp = grads.wrt(pl);
                adam.step(&mut [&mut candidates, p], &[gx, gp])?;
            }
            _ => adam.step(&mut [&mut candidates], &[gx])?,
        }
        if !candidates.is_finite() || trainable_p.as_ref().is_some_and(|p| !p.is_finite()) {
            diverged = true;
            break;
        }
        if trainable_p.is_some() && ((step + 1) % CHECK_EVERY == 0 || step + 1 == config.epochs) {
            let l = mean(&instance_losses(
                model,
                &candidates,
                &task.eval,
                task.floor,
                trainable_p.as_ref(),
            )?);
            if l < best.0 {
                best = (l, candidates.clone(), trainable_p.clone());
            }
        }
    }

    if trainable_p.is_some() {
        candidates = best.1;
        trainable_p = best.2;
    }
    let final_p = eval_p(&trainable_p);
    let (instance_losses, final_loss) = if diverged && trainable_p.is_none() {
        (Vec::new(), f64::NAN)
    } else {
        let ls = instance_losses(model, &candidates, &task.eval, task.floor, final_p.as_ref())?;
        let l = mean(&ls);
        (ls, l)
    };
    let initial_train_loss = batch_losses.first().copied().unwrap_or(initial_loss);
    let tail = &batch_losses[batch_losses.len().saturating_sub(100)..];
    let final_train_loss = if tail.is_empty() {
        initial_loss
    } else {
        mean(tail)
    };
    let diverged = diverged || !final_loss.is_finite();
    Ok(Optimized {
        result: ProbeResult {
            test: task.test,
            candidates,
            final_loss,
            satisfied: !diverged && final_loss < config.threshold,
            instance_losses,
            initial_loss,
            initial_train_loss,
            final_train_loss,
            groups: task.groups,
            train_instances: task.train.len(),
            eval_instances: task.eval.len(),
            epochs: config.epochs,
            seed,
            diverged,
        },
        projection: trainable_p,
    })
}

/// Optimizes candidates for one test on the frozen model.
pub fn optimize_probe<T: Real>(
    env: &ProbeEnv<'_, T>,
    test: TestKind,
    config: &ProbeConfig,
) -> Result<ProbeResult<T>> {
    let task = ProbeTask::build(env, test, config)?;
    Ok(optimize(
        env.model,
        &task,
        config,
        Projection::None,
        None,
        config.test_seed(test),
    )?
    .result)
}

/// Runs all seven tests, in [`TestKind::ALL`] order.
pub fn run_seven_tests<T: Real>(
    env: &ProbeEnv<'_, T>,
    config: &ProbeConfig,
) -> Result<Vec<ProbeResult<T>>> {
    TestKind::ALL
        .iter()
        .map(|&t| optimize_probe(env, t, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{freeze_and_harvest, ModelConfig};
    use alloc::vec;

    fn setup() -> (ModelState<f64>, HiddenPool<f64>, Vec<EncodedDoc>) {
        let mut cfg = ModelConfig::new(4, 5, 3);
        cfg.neurons_per_class = 2;
        cfg.seed = 17;
        let model = ModelState::init(&cfg, 9).unwrap();
        let docs: Vec<EncodedDoc> = (0..6)
            .map(|i| EncodedDoc {
                ids: (0..3 + i % 3).map(|k| 2 + (i + k) % 7).collect(),
                label: i % 3,
            })
            .collect();
        let (model, pool) = freeze_and_harvest(model, &docs).unwrap();
        (model, pool, docs)
    }

    #[test]
    fn test_names_round_trip() {
        for t in TestKind::ALL {
            assert_eq!(TestKind::from_name(t.name()), Some(t));
        }
        assert_eq!(TestKind::from_name("bogus"), None);
    }

    #[test]
    fn commutator_denominator_clamps() {
        let (model, pool, _) = setup();
        let h = pool.state(3).to_vec();
        let x = vec![0.1; 4];
        // Same word twice: the bracket is exactly zero.
        let loss = axiom_loss(&model, AxiomKind::Commutator, &x, &[4, 4], &h).unwrap();
        let rx = model.act(&x, &h).unwrap();
        assert_eq!(loss, norm(&rx) / COMMUTATOR_FLOOR);
    }

    #[test]
    fn zero_state_is_rejected() {
        let (model, _, _) = setup();
        let x = vec![0.0; 4];
        let h = vec![0.0; 5];
        assert!(matches!(
            axiom_loss(&model, AxiomKind::Identity, &x, &[], &h),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn context_arity_is_checked() {
        let (model, pool, _) = setup();
        let h = pool.state(0);
        let x = vec![0.0; 4];
        assert!(axiom_loss(&model, AxiomKind::Identity, &x, &[2], h).is_err());
        assert!(axiom_loss(&model, AxiomKind::Inverse, &x, &[], h).is_err());
        assert!(axiom_loss(&model, AxiomKind::Commutator, &x, &[2], h).is_err());
    }

    #[test]
    fn losses_are_non_negative_and_zero_iff_exact() {
        let (model, pool, _) = setup();
        let h = pool.state(2).to_vec();
        let x = vec![0.3, -0.2, 0.5, 0.1];
        for (kind, ctx) in [
            (AxiomKind::Identity, vec![]),
            (AxiomKind::Inverse, vec![3]),
            (AxiomKind::Closure, vec![3, 5]),
            (AxiomKind::Commutator, vec![3, 5]),
        ] {
            assert!(axiom_loss(&model, kind, &x, &ctx, &h).unwrap() > 0.0);
        }
        // Closure of a single word against that word's own vector is exact.
        let w = model.embedding_row(6).unwrap().to_vec();
        assert_eq!(
            axiom_loss(&model, AxiomKind::Closure, &w, &[6], &h).unwrap(),
            0.0
        );
    }

    #[test]
    fn requires_frozen_model() {
        let (model, pool, docs) = setup();
        let thawed = ModelState::from_params(
            model.config(),
            model.vocab_size(),
            model.params().clone(),
            false,
        )
        .unwrap();
        assert!(ProbeEnv::new(&thawed, &pool, &docs).is_err());
        assert!(ProbeEnv::new(&model, &pool, &docs).is_ok());
    }

    #[test]
    fn zero_epochs_reports_initial_loss() {
        let (model, pool, docs) = setup();
        let env = ProbeEnv::new(&model, &pool, &docs).unwrap();
        let cfg = ProbeConfig {
            epochs: 0,
            ..ProbeConfig::default()
        };
        let r = optimize_probe(&env, TestKind::ArbitraryIdentity, &cfg).unwrap();
        assert_eq!(r.final_loss, r.initial_loss);
        assert!(r.final_loss > cfg.threshold);
        assert!(!r.satisfied);
    }

    #[test]
    fn probes_make_progress_and_are_reproducible() {
        let (model, pool, docs) = setup();
        let env = ProbeEnv::new(&model, &pool, &docs).unwrap();
        let cfg = ProbeConfig {
            epochs: 200,
            train_instances: 128,
            eval_instances: 32,
            word_pair_samples: 4,
            ..ProbeConfig::default()
        };
        let results = run_seven_tests(&env, &cfg).unwrap();
        assert_eq!(results.len(), 7);
        for (r, t) in results.iter().zip(TestKind::ALL) {
            assert_eq!(r.test, t);
            assert!(r.final_loss.is_finite());
            assert!(r.final_train_loss <= r.initial_train_loss, "{t:?}");
            assert_eq!(r.satisfied, r.final_loss < cfg.threshold);
        }
        let again = run_seven_tests(&env, &cfg).unwrap();
        assert_eq!(results, again);
    }
}
