//! The `(m, n)` hyperparameter grid: per-cell runs, Fisher sensitivity and
//! contour tables.
//!
//! Fisher information along a dimension is estimated from test accuracy
//! `a(m, n)` used as a likelihood proxy: the mean, over interior grid points,
//! of the squared central difference of `ln a` along that axis,
//!
//! ```text
//! F_m = mean_{i, n} ((ln a(m_{i+1}, n) - ln a(m_{i-1}, n)) / (m_{i+1} - m_{i-1}))^2
//! ```
//!
//! This is an interpretation; it is scale free, so multiplying every
//! accuracy by the same constant leaves it unchanged.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::corpus::EncodedDoc;
use crate::error::{Error, Result};
use crate::model::{
    evaluate, freeze_and_harvest, train, EpochMetrics, HiddenPool, ModelConfig, ModelState,
};
use crate::probes::{run_seven_tests, ProbeConfig, ProbeEnv, ProbeResult, TestKind};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub m_values: Vec<usize>,
    pub n_values: Vec<usize>,
    /// Template for every cell; its dimensions and seed are overwritten.
    pub template: ModelConfig,
    pub seed: u64,
}

fn strictly_increasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl GridSpec {
    pub fn new(
        m_values: Vec<usize>,
        n_values: Vec<usize>,
        template: ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        for (name, v) in [("m", &m_values), ("n", &n_values)] {
            if v.is_empty() {
                return Err(Error::config(format!("{name} grid is empty")));
            }
            if !strictly_increasing(v) {
                return Err(Error::config(format!(
                    "{name} grid must be strictly increasing"
                )));
            }
            if v[0] == 0 {
                return Err(Error::config(format!(
                    "{name} grid values must be positive"
                )));
            }
        }
        Ok(Self {
            m_values,
            n_values,
            template,
            seed,
        })
    }

    /// `20, 40, .., 280` on both axes.
    pub fn full(template: ModelConfig, seed: u64) -> Self {
        let axis: Vec<usize> = (1..=14).map(|k| 20 * k).collect();
        Self::new(axis.clone(), axis, template, seed).expect("static grid is valid")
    }

    /// Cells in row-major `(m, n)` order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.m_values
            .iter()
            .flat_map(|&m| self.n_values.iter().map(move |&n| (m, n)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.m_values.len() * self.n_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_seed(&self, m: usize, n: usize) -> u64 {
        cell_seed(self.seed, m, n)
    }

    pub fn cell_config(&self, m: usize, n: usize) -> ModelConfig {
        ModelConfig {
            embedding_dim: m,
            hidden_dim: n,
            seed: self.cell_seed(m, n),
            ..self.template.clone()
        }
    }
}

/// Seed of cell `(m, n)`; independent of the order cells are run in.
pub fn cell_seed(global: u64, m: usize, n: usize) -> u64 {
    derive_seed(global, &[m as u64, n as u64])
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    /// Final loss per test, in [`TestKind::ALL`] order, when probes ran.
    pub probe_losses: Option<[f64; 7]>,
}

impl SweepRecord {
    pub fn probe_loss(&self, test: TestKind) -> Option<f64> {
        self.probe_losses.map(|l| l[test.index()])
    }
}

/// Train/validation/test documents shared by every cell.
#[derive(Debug, Clone, Copy)]
pub struct PreparedCorpus<'a> {
    pub vocab_size: usize,
    pub train: &'a [EncodedDoc],
    pub validation: &'a [EncodedDoc],
    pub test: &'a [EncodedDoc],
}

/// Everything one cell produces.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub record: SweepRecord,
    pub model: ModelState<f32>,
    pub pool: HiddenPool<f32>,
    pub history: Vec<EpochMetrics>,
    pub probes: Option<Vec<ProbeResult<f32>>>,
}

/// Trains, freezes and harvests one cell, then runs the seven tests when
/// `probes` is given. The probe seed is taken from the cell seed.
pub fn run_cell(
    spec: &GridSpec,
    m: usize,
    n: usize,
    corpus: PreparedCorpus<'_>,
    probes: Option<&ProbeConfig>,
) -> Result<CellRun> {
    let config = spec.cell_config(m, n);
    let (model, history) =
        train::<f32>(&config, corpus.vocab_size, corpus.train, corpus.validation)?;
    let test_accuracy = evaluate(&model, corpus.test)?.accuracy;
    let (model, pool) = freeze_and_harvest(model, corpus.test)?;
    let probe_results = match probes {
        Some(pc) => {
            let env = ProbeEnv::new(&model, &pool, corpus.test)?;
            let cfg = ProbeConfig {
                seed: derive_seed(config.seed, &[0x7072_6f62]),
                ..pc.clone()
            };
            Some(run_seven_tests(&env, &cfg)?)
        }
        None => None,
    };
    let probe_losses = probe_results.as_ref().map(|rs| {
        let mut l = [f64::NAN; 7];
        for r in rs {
            l[r.test.index()] = r.final_loss;
        }
        l
    });
    Ok(CellRun {
        record: SweepRecord {
            m,
            n,
            seed: config.seed,
            test_accuracy,
            probe_losses,
        },
        model,
        pool,
        history,
        probes: probe_results,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Embedding,
    Hidden,
}

impl Dimension {
    pub fn name(self) -> &'static str {
        match self {
            Dimension::Embedding => "embedding",
            Dimension::Hidden => "hidden",
        }
    }
}

type AccuracyGrid = BTreeMap<(usize, usize), f64>;

/// Accuracy per cell, checked to form a complete rectangle.
fn accuracy_grid(records: &[SweepRecord]) -> Result<(Vec<usize>, Vec<usize>, AccuracyGrid)> {
    let mut grid = BTreeMap::new();
    for r in records {
        if grid.insert((r.m, r.n), r.test_accuracy).is_some() {
            return Err(Error::config(format!(
                "duplicate record for cell ({}, {})",
                r.m, r.n
            )));
        }
    }
    let mut ms: Vec<usize> = grid.keys().map(|k| k.0).collect();
    let mut ns: Vec<usize> = grid.keys().map(|k| k.1).collect();
    ms.dedup();
    ns.sort_unstable();
    ns.dedup();
    if ms.len() * ns.len() != grid.len() {
        return Err(Error::config(format!(
            "grid is incomplete: {} of {} cells present",
            grid.len(),
            ms.len() * ns.len()
        )));
    }
    Ok((ms, ns, grid))
}

/// Mean squared central difference of `ln accuracy` along `dim`.
pub fn fisher_information(records: &[SweepRecord], dim: Dimension) -> Result<f64> {
    let (ms, ns, grid) = accuracy_grid(records)?;
    let (axis, other) = match dim {
        Dimension::Embedding => (&ms, &ns),
        Dimension::Hidden => (&ns, &ms),
    };
    if axis.len() < 3 {
        return Err(Error::config(format!(
            "{} axis needs at least 3 values for a central difference",
            dim.name()
        )));
    }
    if let Some(((m, n), _)) = grid.iter().find(|(_, &a)| a.is_nan() || a <= 0.0) {
        return Err(Error::degenerate(format!(
            "accuracy at ({m}, {n}) is not positive"
        )));
    }
    let at = |i: usize, o: usize| -> f64 {
        let key = match dim {
            Dimension::Embedding => (axis[i], other[o]),
            Dimension::Hidden => (other[o], axis[i]),
        };
        libm::log(grid[&key])
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for o in 0..other.len() {
        for i in 1..axis.len() - 1 {
            let d = (at(i + 1, o) - at(i - 1, o)) / (axis[i + 1] - axis[i - 1]) as f64;
            sum += d * d;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherReport {
    pub embedding: f64,
    pub hidden: f64,
    /// `hidden / embedding`; `None` when the embedding value is zero.
    pub ratio: Option<f64>,
}

pub fn fisher_report(records: &[SweepRecord]) -> Result<FisherReport> {
    let embedding = fisher_information(records, Dimension::Embedding)?;
    let hidden = fisher_information(records, Dimension::Hidden)?;
    Ok(FisherReport {
        embedding,
        hidden,
        ratio: (embedding > 0.0).then(|| hidden / embedding),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    Probe(TestKind),
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Probe(t) => t.name(),
        }
    }

    pub fn of(self, r: &SweepRecord) -> Option<f64> {
        match self {
            Metric::Accuracy => Some(r.test_accuracy),
            Metric::Probe(t) => r.probe_loss(t),
        }
    }
}

/// `(m, n, value)` rows over the full rectangle spanned by `records`, in
/// row-major order; cells without a record or value are `None`.
pub fn contour_rows(records: &[SweepRecord], metric: Metric) -> Vec<(usize, usize, Option<f64>)> {
    let mut ms: Vec<usize> = records.iter().map(|r| r.m).collect();
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ms.sort_unstable();
    ms.dedup();
    ns.sort_unstable();
    ns.dedup();
    let by_cell: BTreeMap<(usize, usize), &SweepRecord> =
        records.iter().map(|r| ((r.m, r.n), r)).collect();
    ms.iter()
        .flat_map(|&m| ns.iter().map(move |&n| (m, n)))
        .map(|(m, n)| (m, n, by_cell.get(&(m, n)).and_then(|r| metric.of(r))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid(ms: &[usize], ns: &[usize], a: impl Fn(usize, usize) -> f64) -> Vec<SweepRecord> {
        ms.iter()
            .flat_map(|&m| ns.iter().map(move |&n| (m, n)))
            .map(|(m, n)| SweepRecord {
                m,
                n,
                seed: 0,
                test_accuracy: a(m, n),
                probe_losses: None,
            })
            .collect()
    }

    #[test]
    fn spec_validation() {
        let t = ModelConfig::new(1, 1, 2);
        assert!(GridSpec::new(vec![], vec![20], t.clone(), 0).is_err());
        assert!(GridSpec::new(vec![20, 20], vec![20], t.clone(), 0).is_err());
        assert!(GridSpec::new(vec![40, 20], vec![20], t.clone(), 0).is_err());
        let full = GridSpec::full(t.clone(), 0);
        assert_eq!(full.len(), 196);
        let desk = GridSpec::new(vec![20, 40, 60], vec![20, 40, 60], t, 9).unwrap();
        assert_eq!(desk.cells().len(), 9);
        assert_eq!(desk.cell_config(40, 60).hidden_dim, 60);
        assert_eq!(desk.cell_seed(40, 60), cell_seed(9, 40, 60));
        assert_ne!(desk.cell_seed(40, 60), desk.cell_seed(60, 40));
    }

    #[test]
    fn constant_grid_has_zero_information() {
        let r = grid(&[20, 40, 60], &[20, 40, 60], |_, _| 0.8);
        assert_eq!(fisher_information(&r, Dimension::Embedding).unwrap(), 0.0);
        assert_eq!(fisher_information(&r, Dimension::Hidden).unwrap(), 0.0);
        assert_eq!(fisher_report(&r).unwrap().ratio, None);
    }

    #[test]
    fn exponential_grid_gives_c_squared() {
        let c = 0.013;
        let ms = [20, 40, 60, 80, 100];
        let r = grid(&ms, &[20, 40, 60], |m, _| libm::exp(c * m as f64 - 1.5));
        assert!((fisher_information(&r, Dimension::Embedding).unwrap() - c * c).abs() < 1e-9);
        assert!(fisher_information(&r, Dimension::Hidden).unwrap().abs() < 1e-18);
        // Uneven spacing: still exact for a log-linear surface.
        let r = grid(&[10, 20, 50, 60], &[5, 9, 30], |_, n| {
            libm::exp(-c * n as f64)
        });
        assert!((fisher_information(&r, Dimension::Hidden).unwrap() - c * c).abs() < 1e-9);
    }

    #[test]
    fn rescaling_accuracy_leaves_information_unchanged() {
        let f = |m: usize, n: usize| 0.3 + 0.5 * libm::sin((m * 7 + n * 3) as f64).abs() * 0.5;
        let a = grid(&[20, 40, 60, 80], &[20, 40, 60], f);
        let b = grid(&[20, 40, 60, 80], &[20, 40, 60], |m, n| 0.37 * f(m, n));
        for d in [Dimension::Embedding, Dimension::Hidden] {
            let (x, y) = (
                fisher_information(&a, d).unwrap(),
                fisher_information(&b, d).unwrap(),
            );
            assert!((x - y).abs() <= 1e-12 * x.max(1e-300));
        }
    }

    #[test]
    fn incomplete_or_short_grids_are_rejected() {
        let mut r = grid(&[20, 40, 60], &[20, 40, 60], |_, _| 0.5);
        r.pop();
        assert!(matches!(
            fisher_information(&r, Dimension::Embedding),
            Err(Error::Config(_))
        ));
        let short = grid(&[20, 40], &[20, 40, 60], |_, _| 0.5);
        assert!(fisher_information(&short, Dimension::Embedding).is_err());
        assert!(fisher_information(&short, Dimension::Hidden).is_ok());
        let zero = grid(&[20, 40, 60], &[20, 40, 60], |m, _| {
            if m == 40 {
                0.0
            } else {
                0.5
            }
        });
        assert!(fisher_information(&zero, Dimension::Embedding).is_err());
    }

    #[test]
    fn contour_fills_missing_cells() {
        let mut r = grid(&[20, 40, 60], &[20, 40, 60], |m, n| (m + n) as f64 / 200.0);
        assert_eq!(contour_rows(&r, Metric::Accuracy).len(), 9);
        r.remove(4);
        let rows = contour_rows(&r, Metric::Accuracy);
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[4], (40, 40, None));
        assert_eq!(rows[0], (20, 20, Some(0.2)));
        assert!(contour_rows(&r, Metric::Probe(TestKind::ArbitraryIdentity))
            .iter()
            .all(|c| c.2.is_none()));
    }
}
