//! Linear-combination search over GRU outputs.
//!
//! A projection `P` (`n x p`) is trained jointly with candidate words for
//! one target test, frozen, and then reused while candidates are
//! re-optimized for the remaining tests. The commutator gets its own
//! projection, trained on instances whose bracket is not vanishing.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::probes::{
    axiom_states, floor_for, instance_losses, optimize, AxiomKind, ProbeConfig, ProbeEnv,
    ProbeResult, ProbeTask, Projection, TestKind,
};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::{norm, Real, Tensor};

/// Column norm below which a projection counts as collapsed.
pub const DEGENERATE_COLUMN_NORM: f64 = 1e-8;
pub const DEFAULT_COMMUTATOR_FILTER: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T> {
    matrix: Tensor<T>,
    pub trained_on: TestKind,
    frozen: bool,
}

impl<T: Real> ProjectionMatrix<T> {
    pub fn new(matrix: Tensor<T>, trained_on: TestKind) -> Result<Self> {
        if matrix.cols() == 0 {
            return Err(Error::config("latent dimension must be at least 1"));
        }
        Ok(Self {
            matrix,
            trained_on,
            frozen: false,
        })
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> Result<&mut Tensor<T>> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(&mut self.matrix)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn latent_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn min_column_norm(&self) -> f64 {
        let t = self.matrix.transpose();
        (0..t.rows())
            .map(|c| norm(t.row(c)))
            .fold(f64::INFINITY, f64::min)
    }

    /// FNV-1a over the matrix bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.matrix.data() {
            for b in v.to_bits_u64().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentConfig {
    /// Standard deviation of the noise added to the truncated identity.
    pub init_noise: f64,
    pub max_restarts: usize,
    /// Test the shared projection is trained for.
    pub target: TestKind,
    /// Bracket norm below which commutator instances are excluded.
    pub commutator_filter: f64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            init_noise: 1e-3,
            max_restarts: 3,
            target: TestKind::CompositeInverse,
            commutator_filter: DEFAULT_COMMUTATOR_FILTER,
        }
    }
}

/// First `p` columns of `I_n` plus seeded normal noise.
pub fn truncated_identity<T: Real>(n: usize, p: usize, noise: f64, seed: u64) -> Tensor<T> {
    let mut rng = SeededRng::new(seed);
    let mut t = Tensor::zeros(n, p);
    for r in 0..n {
        for c in 0..p {
            let base = if r == c { 1.0 } else { 0.0 };
            let jitter = if noise > 0.0 {
                rng.normal() * noise
            } else {
                0.0
            };
            t.set(r, c, T::from_f64(base + jitter));
        }
    }
    t
}

/// Axiomatic loss with every output state right-multiplied by `P`.
pub fn projected_axiom_loss<T: Real>(
    env: &ProbeEnv<'_, T>,
    kind: AxiomKind,
    x: &[T],
    context: &[usize],
    h: &[T],
    projection: &Tensor<T>,
) -> Result<f64> {
    let model = env.model;
    if projection.rows() != model.hidden_dim() {
        return Err(Error::Shape {
            op: "projected_axiom_loss",
            left: (model.hidden_dim(), projection.cols()),
            right: projection.shape(),
        });
    }
    let (s, t) = axiom_states(model, kind, context, h)?;
    crate::probes::relative_residual(model, x, &s, &t, floor_for(kind), Some(projection))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProjection<T> {
    pub projection: ProjectionMatrix<T>,
    /// Target-test result at the kept `(P, x)` iterate.
    pub result: ProbeResult<T>,
    /// Evaluation loss at the initial `(P, x)`.
    pub initial_loss: f64,
    pub restarts: usize,
}

fn check_latent_dim(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::config("latent dimension must be at least 1"));
    }
    Ok(())
}

/// Jointly optimizes `P` and the target test's candidates; returns `P` frozen.
///
/// The best evaluated iterate is kept, so the returned loss never exceeds
/// the loss at initialization. A projection with a collapsed column is
/// retried with a fresh seed up to `max_restarts` times.
pub fn train_projection<T: Real>(
    env: &ProbeEnv<'_, T>,
    target: TestKind,
    p: usize,
    config: &ProbeConfig,
    latent: &LatentConfig,
    warm_start: Option<&Tensor<T>>,
) -> Result<TrainedProjection<T>> {
    check_latent_dim(p)?;
    if target == TestKind::ArbitraryCommutator {
        return Err(Error::config(
            "the commutator uses its own projection; see train_commutator_projection",
        ));
    }
    let task = ProbeTask::build(env, target, config)?;
    let n = env.model.hidden_dim();
    for restart in 0..=latent.max_restarts {
        let seed = derive_seed(
            config.test_seed(target),
            &[0x5052_4f4a, p as u64, restart as u64],
        );
        let init = truncated_identity(n, p, latent.init_noise, derive_seed(seed, &[7]));
        let opt = optimize(
            env.model,
            &task,
            config,
            Projection::Trainable(init),
            warm_start,
            seed,
        )?;
        let matrix = opt
            .projection
            .ok_or_else(|| Error::Usage("projection missing".into()))?;
        let mut projection = ProjectionMatrix::new(matrix, target)?;
        if projection.min_column_norm() < DEGENERATE_COLUMN_NORM {
            continue;
        }
        projection.freeze();
        return Ok(TrainedProjection {
            initial_loss: opt.result.initial_loss,
            projection,
            result: opt.result,
            restarts: restart,
        });
    }
    Err(Error::degenerate(format!(
        "projection for {} collapsed after {} restarts",
        target.name(),
        latent.max_restarts
    )))
}

/// Re-optimizes candidates for every test except the commutator with `P` held fixed.
///
/// Uses the same per-test seeds as [`crate::probes::run_seven_tests`].
pub fn evaluate_with_frozen_projection<T: Real>(
    env: &ProbeEnv<'_, T>,
    projection: &ProjectionMatrix<T>,
    config: &ProbeConfig,
) -> Result<Vec<ProbeResult<T>>> {
    if !projection.is_frozen() {
        return Err(Error::config("projection must be frozen before evaluation"));
    }
    TestKind::ALL
        .iter()
        .filter(|&&t| t != TestKind::ArbitraryCommutator)
        .map(|&t| {
            let task = ProbeTask::build(env, t, config)?;
            Ok(optimize(
                env.model,
                &task,
                config,
                Projection::Frozen(projection.matrix()),
                None,
                config.test_seed(t),
            )?
            .result)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorProjection<T> {
    pub projection: ProjectionMatrix<T>,
    /// Result over evaluation instances that pass the filter.
    pub result: ProbeResult<T>,
    /// Mean projected loss over all evaluation instances (denominator
    /// clamped at the commutator floor).
    pub unfiltered_loss: f64,
    pub excluded_train: usize,
    pub excluded_eval: usize,
}

/// Whether a commutator instance's unprojected bracket is large enough to keep.
pub fn passes_bracket_filter<T: Real>(bracket: &[T], threshold: f64) -> bool {
    norm(bracket) >= threshold
}

/// Trains a dedicated projection for the commutator, excluding instances
/// whose unprojected bracket norm is below `filter_threshold`.
pub fn train_commutator_projection<T: Real>(
    env: &ProbeEnv<'_, T>,
    p: usize,
    config: &ProbeConfig,
    latent: &LatentConfig,
    filter_threshold: f64,
) -> Result<CommutatorProjection<T>> {
    check_latent_dim(p)?;
    let test = TestKind::ArbitraryCommutator;
    let full = ProbeTask::build(env, test, config)?;
    let mut task = full.clone();
    task.train
        .retain(|i| passes_bracket_filter(&i.target, filter_threshold));
    task.eval
        .retain(|i| passes_bracket_filter(&i.target, filter_threshold));
    if task.train.is_empty() || task.eval.is_empty() {
        return Err(Error::config(format!(
            "every commutator instance has bracket norm below {filter_threshold}"
        )));
    }
    let n = env.model.hidden_dim();
    for restart in 0..=latent.max_restarts {
        let seed = derive_seed(
            config.test_seed(test),
            &[0x434f_4d4d, p as u64, restart as u64],
        );
        let init = truncated_identity(n, p, latent.init_noise, derive_seed(seed, &[7]));
        let opt = optimize(
            env.model,
            &task,
            config,
            Projection::Trainable(init),
            None,
            seed,
        )?;
        let matrix = opt
            .projection
            .ok_or_else(|| Error::Usage("projection missing".into()))?;
        let mut projection = ProjectionMatrix::new(matrix, test)?;
        if projection.min_column_norm() < DEGENERATE_COLUMN_NORM {
            continue;
        }
        projection.freeze();
        let all = instance_losses(
            env.model,
            &opt.result.candidates,
            &full.eval,
            full.floor,
            Some(projection.matrix()),
        )?;
        let unfiltered_loss = all.iter().sum::<f64>() / all.len() as f64;
        return Ok(CommutatorProjection {
            projection,
            result: opt.result,
            unfiltered_loss,
            excluded_train: full.train.len() - task.train.len(),
            excluded_eval: full.eval.len() - task.eval.len(),
        });
    }
    Err(Error::degenerate(format!(
        "commutator projection collapsed after {} restarts",
        latent.max_restarts
    )))
}

/// `p` from 20 to `n - 20` in steps of 20.
pub fn default_p_grid(n: usize) -> Result<Vec<usize>> {
    if n < 40 {
        return Err(Error::config(format!(
            "hidden dimension {n} is below 40; supply an explicit latent grid"
        )));
    }
    Ok((20..=n - 20).step_by(20).collect())
}

/// One repeat of the scan at a fixed latent dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRun {
    pub repeat: usize,
    pub seed: u64,
    /// `(series name, loss)` in a fixed order.
    pub losses: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentScanRecord {
    pub p: usize,
    pub runs: Vec<LatentRun>,
    /// `(series name, mean, population std)` over the runs.
    pub summary: Vec<(&'static str, f64, f64)>,
}

impl LatentScanRecord {
    pub fn repeats(&self) -> usize {
        self.runs.len()
    }
}

/// Series emitted per run: the target's training loss, the six tests
/// re-evaluated under the frozen projection, and the commutator under its
/// own projection (filtered and unfiltered).
pub const TARGET_SERIES: &str = "projection_target";
pub const COMMUTATOR_UNFILTERED_SERIES: &str = "arbitrary_commutator_unfiltered";

/// Mean and population standard deviation, summed in order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Averages the per-run losses of each series.
pub fn summarize(runs: &[LatentRun]) -> Vec<(&'static str, f64, f64)> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .losses
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let vals: Vec<f64> = runs.iter().map(|r| r.losses[i].1).collect();
            let (m, s) = mean_std(&vals);
            (*name, m, s)
        })
        .collect()
}

/// Runs `repeats` seeded projection searches per latent dimension.
pub fn scan_latent_dimensions<T: Real>(
    env: &ProbeEnv<'_, T>,
    p_grid: &[usize],
    repeats: usize,
    config: &ProbeConfig,
    latent: &LatentConfig,
) -> Result<Vec<LatentScanRecord>> {
    if p_grid.is_empty() {
        return Err(Error::config("latent grid is empty"));
    }
    if repeats == 0 {
        return Err(Error::config("repeats must be at least 1"));
    }
    let mut records = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let mut runs = Vec::with_capacity(repeats);
        for repeat in 0..repeats {
            let seed = derive_seed(config.seed, &[p as u64, repeat as u64]);
            let cfg = ProbeConfig {
                seed,
                ..config.clone()
            };
            let trained = train_projection(env, latent.target, p, &cfg, latent, None)?;
            let mut losses = alloc::vec![(TARGET_SERIES, trained.result.final_loss)];
            for r in evaluate_with_frozen_projection(env, &trained.projection, &cfg)? {
                losses.push((r.test.name(), r.final_loss));
            }
            let comm = train_commutator_projection(env, p, &cfg, latent, latent.commutator_filter)?;
            losses.push((TestKind::ArbitraryCommutator.name(), comm.result.final_loss));
            losses.push((COMMUTATOR_UNFILTERED_SERIES, comm.unfiltered_loss));
            runs.push(LatentRun {
                repeat,
                seed,
                losses,
            });
        }
        let summary = summarize(&runs);
        records.push(LatentScanRecord { p, runs, summary });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EncodedDoc;
    use crate::model::{freeze_and_harvest, HiddenPool, ModelConfig, ModelState};
    use alloc::vec;

    fn setup() -> (ModelState<f64>, HiddenPool<f64>, Vec<EncodedDoc>) {
        let mut cfg = ModelConfig::new(4, 5, 3);
        cfg.neurons_per_class = 2;
        cfg.seed = 23;
        let model = ModelState::init(&cfg, 9).unwrap();
        let docs: Vec<EncodedDoc> = (0..6)
            .map(|i| EncodedDoc {
                ids: (0..3 + i % 3).map(|k| 2 + (i * 3 + k) % 7).collect(),
                label: i % 3,
            })
            .collect();
        let (model, pool) = freeze_and_harvest(model, &docs).unwrap();
        (model, pool, docs)
    }

    fn quick() -> ProbeConfig {
        ProbeConfig {
            epochs: 60,
            train_instances: 96,
            eval_instances: 24,
            word_pair_samples: 3,
            ..ProbeConfig::default()
        }
    }

    #[test]
    fn grid_bounds() {
        assert_eq!(
            default_p_grid(220).unwrap(),
            (1..=10).map(|k| 20 * k).collect::<Vec<_>>()
        );
        assert_eq!(default_p_grid(60).unwrap(), vec![20, 40]);
        assert!(default_p_grid(39).is_err());
    }

    #[test]
    fn identity_projection_matches_plain_loss() {
        let (model, pool, docs) = setup();
        let env = ProbeEnv::new(&model, &pool, &docs).unwrap();
        let eye = Tensor::identity(5);
        let h = pool.state(4);
        let x = [0.2, -0.1, 0.4, 0.0];
        for (kind, ctx) in [
            (AxiomKind::Identity, vec![]),
            (AxiomKind::Inverse, vec![3]),
            (AxiomKind::Closure, vec![3, 7]),
            (AxiomKind::Commutator, vec![3, 7]),
        ] {
            let a = crate::probes::axiom_loss(&model, kind, &x, &ctx, h).unwrap();
            let b = projected_axiom_loss(&env, kind, &x, &ctx, h, &eye).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_projection_is_degenerate() {
        let (model, pool, docs) = setup();
        let env = ProbeEnv::new(&model, &pool, &docs).unwrap();
        let r = projected_axiom_loss(
            &env,
            AxiomKind::Identity,
            &[0.0; 4],
            &[],
            pool.state(1),
            &Tensor::zeros(5, 2),
        );
        assert!(matches!(r, Err(Error::Degenerate(_))));
        let bad = projected_axiom_loss(
            &env,
            AxiomKind::Identity,
            &[0.0; 4],
            &[],
            pool.state(1),
            &Tensor::zeros(4, 2),
        );
        assert!(matches!(bad, Err(Error::Shape { .. })));
    }

    #[test]
    fn bracket_filter_threshold() {
        assert!(!passes_bracket_filter(&[1e-4f64, 0.0], 1e-3));
        assert!(passes_bracket_filter(&[1e-3f64, 0.0], 1e-3));
    }

    #[test]
    fn infinite_filter_is_a_configuration_error() {
        let (model, pool, docs) = setup();
        let env = ProbeEnv::new(&model, &pool, &docs).unwrap();
        let r =
            train_commutator_projection(&env, 3, &quick(), &LatentConfig::default(), f64::INFINITY);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn projection_training_never_ends_above_start() {
        let (model, pool, docs) = setup();
        let env = ProbeEnv::new(&model, &pool, &docs).unwrap();
        let latent = LatentConfig {
            init_noise: 0.0,
            ..LatentConfig::default()
        };
        for p in [2, 5] {
            let t = train_projection(&env, TestKind::CompositeInverse, p, &quick(), &latent, None)
                .unwrap();
            assert!(t.result.final_loss <= t.initial_loss + 1e-6);
            assert!(t.projection.is_frozen());
            let again =
                train_projection(&env, TestKind::CompositeInverse, p, &quick(), &latent, None)
                    .unwrap();
            assert_eq!(t.projection.fingerprint(), again.projection.fingerprint());
        }
        assert!(train_projection(
            &env,
            TestKind::ArbitraryCommutator,
            2,
            &quick(),
            &latent,
            None
        )
        .is_err());
    }

    #[test]
    fn frozen_projection_rejects_mutation() {
        let mut p =
            ProjectionMatrix::new(Tensor::<f32>::identity(3), TestKind::CompositeInverse).unwrap();
        assert!(p.matrix_mut().is_ok());
        p.freeze();
        assert_eq!(p.matrix_mut().unwrap_err(), Error::Frozen);
    }

    #[test]
    fn scan_is_reproducible_and_averages_runs() {
        let (model, pool, docs) = setup();
        let env = ProbeEnv::new(&model, &pool, &docs).unwrap();
        let cfg = ProbeConfig {
            epochs: 20,
            ..quick()
        };
        let latent = LatentConfig::default();
        let a = scan_latent_dimensions(&env, &[2, 4], 2, &cfg, &latent).unwrap();
        let b = scan_latent_dimensions(&env, &[2, 4], 2, &cfg, &latent).unwrap();
        assert_eq!(a, b);
        for rec in &a {
            assert_eq!(rec.repeats(), 2);
            for (i, (name, mean, _)) in rec.summary.iter().enumerate() {
                assert_eq!(*name, rec.runs[0].losses[i].0);
                let expect = (rec.runs[0].losses[i].1 + rec.runs[1].losses[i].1) / 2.0;
                assert_eq!(*mean, expect);
            }
        }
        assert!(scan_latent_dimensions(&env, &[], 2, &cfg, &latent).is_err());
    }
}
