//! Geometry of the learned word space.
//!
//! Angles and distances are collected for six categories of vector pairs,
//! together with the norms of the average vectors and the fractional effect
//! of swapping one word for another on a hidden state.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::corpus::EncodedDoc;
use crate::error::{Error, Result};
use crate::model::{HiddenPool, ModelState};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::{dot, norm, Real, Tensor};

/// Cosine at or above this value counts as a unit spike.
pub const UNIT_COSINE: f64 = 1.0 - 1e-9;

/// Normalized cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Real>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op: "cosine_similarity",
            left: (1, a.len()),
            right: (1, b.len()),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::degenerate("cosine similarity of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Euclidean distance `|a - b|`.
pub fn word_distance<T: Real>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op: "word_distance",
            left: (1, a.len()),
            right: (1, b.len()),
        });
    }
    let sq: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum();
    Ok(libm::sqrt(sq))
}

/// `|R_w1 h - R_w2 h| / |h|` through the GRU cell.
pub fn fractional_effect<T: Real>(
    model: &ModelState<T>,
    w1: usize,
    w2: usize,
    h: &[T],
) -> Result<f64> {
    let nh = norm(h);
    if nh == 0.0 {
        return Err(Error::degenerate(
            "fractional effect of a zero hidden state",
        ));
    }
    let a = model.gru_cell(w1, h)?;
    let b = model.gru_cell(w2, h)?;
    Ok(word_distance(&a, &b)? / nh)
}

/// Differences of adjacent word vectors along a document.
///
/// Documents shorter than two tokens have no tangents.
pub fn tangent_vectors<T: Real>(ids: &[usize], embedding: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
    for &id in ids {
        if id >= embedding.rows() {
            return Err(Error::Index {
                what: "word id",
                index: id,
                bound: embedding.rows(),
            });
        }
    }
    Ok(ids
        .windows(2)
        .map(|w| {
            embedding
                .row(w[1])
                .iter()
                .zip(embedding.row(w[0]))
                .map(|(&b, &a)| b.to_f64() - a.to_f64())
                .collect()
        })
        .collect())
}

fn average<'a, I: IntoIterator<Item = &'a [f64]>>(dim: usize, vs: I) -> Vec<f64> {
    let mut acc = alloc::vec![0.0; dim];
    let mut n = 0usize;
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        n += 1;
    }
    if n > 0 {
        for a in &mut acc {
            *a /= n as f64;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VectorCategory {
    RandomWordPairs,
    WordsVsGlobalAverage,
    CooccurringPairs,
    WordsVsCooccurringAverage,
    AdjacentTangents,
    TangentsVsCooccurringTangentAverage,
}

impl VectorCategory {
    pub const ALL: [VectorCategory; 6] = [
        VectorCategory::RandomWordPairs,
        VectorCategory::WordsVsGlobalAverage,
        VectorCategory::CooccurringPairs,
        VectorCategory::WordsVsCooccurringAverage,
        VectorCategory::AdjacentTangents,
        VectorCategory::TangentsVsCooccurringTangentAverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VectorCategory::RandomWordPairs => "random_word_pairs",
            VectorCategory::WordsVsGlobalAverage => "words_vs_global_average",
            VectorCategory::CooccurringPairs => "cooccurring_pairs",
            VectorCategory::WordsVsCooccurringAverage => "words_vs_cooccurring_average",
            VectorCategory::AdjacentTangents => "adjacent_tangents",
            VectorCategory::TangentsVsCooccurringTangentAverage => {
                "tangents_vs_cooccurring_tangent_average"
            }
        }
    }
}

/// Equal-width histogram that keeps its raw samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<usize>,
    pub samples: Vec<f64>,
}

impl Histogram {
    /// Bins `samples` over `[min, max]`; the last bin is closed on the right
    /// and out-of-range values are clamped into the edge bins.
    pub fn build(samples: Vec<f64>, min: f64, max: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::config("histogram needs at least one bin"));
        }
        if max.is_nan() || min.is_nan() || max <= min {
            return Err(Error::config("histogram range must satisfy min < max"));
        }
        let mut counts = alloc::vec![0; bins];
        for &v in &samples {
            counts[Self::bin_of(v, min, max, bins)] += 1;
        }
        Ok(Self {
            min,
            max,
            counts,
            samples,
        })
    }

    fn bin_of(v: f64, min: f64, max: f64, bins: usize) -> usize {
        let t = (v - min) / (max - min) * bins as f64;
        if t.is_nan() || t < 0.0 {
            return 0;
        }
        (libm::floor(t) as usize).min(bins - 1)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `bins + 1` edges from `min` to `max`.
    pub fn edges(&self) -> Vec<f64> {
        let b = self.bins();
        let w = (self.max - self.min) / b as f64;
        (0..=b)
            .map(|i| {
                if i == b {
                    self.max
                } else {
                    self.min + w * i as f64
                }
            })
            .collect()
    }

    pub fn rebin(&self, bins: usize) -> Result<Self> {
        Self::build(self.samples.clone(), self.min, self.max, bins)
    }
}

fn distance_histogram(samples: Vec<f64>, bins: usize) -> Result<Histogram> {
    let max = samples.iter().copied().fold(0.0, f64::max);
    Histogram::build(samples, 0.0, if max > 0.0 { max } else { 1.0 }, bins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryStats {
    pub category: VectorCategory,
    pub cosine: Histogram,
    pub distance: Histogram,
    /// Pairs left out of the cosine histogram because a vector was zero.
    pub rejected_cosine: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormSeries {
    pub name: &'static str,
    pub values: Vec<f64>,
}

/// One sampled `(w1, w2, h)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectPoint {
    pub w1: usize,
    pub w2: usize,
    pub cosine: f64,
    /// Unnormalized `w1 . w2`.
    pub dot: f64,
    pub distance: f64,
    pub effect: f64,
}

/// Co-occurring pairs at cosine one, split by whether the two tokens are
/// the same word.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnitCosineBreakdown {
    pub same_token: usize,
    pub distinct_token: usize,
    /// Same-token spike counts per word id.
    pub by_word: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub categories: Vec<CategoryStats>,
    /// Global average (one value), per-document word averages, per-document
    /// tangent averages.
    pub norms: Vec<NormSeries>,
    pub effects: Vec<EffectPoint>,
    pub rejected_effects: usize,
    pub unit_cosine: UnitCosineBreakdown,
    pub samples_per_category: usize,
    pub bins: usize,
    pub seed: u64,
}

impl GeometryReport {
    pub fn category(&self, c: VectorCategory) -> &CategoryStats {
        &self.categories[c as usize]
    }

    /// `(cos, effect)` points.
    pub fn effect_vs_cosine(&self) -> Vec<(f64, f64)> {
        self.effects.iter().map(|p| (p.cosine, p.effect)).collect()
    }

    /// `(|dw|, effect)` points.
    pub fn effect_vs_distance(&self) -> Vec<(f64, f64)> {
        self.effects
            .iter()
            .map(|p| (p.distance, p.effect))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub samples_per_category: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            samples_per_category: 10_000,
            bins: 50,
            seed: 0,
        }
    }
}

#[derive(Default)]
struct Collector {
    cos: Vec<f64>,
    dist: Vec<f64>,
    rejected: usize,
}

impl Collector {
    fn push(&mut self, a: &[f64], b: &[f64]) -> Result<Option<f64>> {
        self.dist.push(word_distance(a, b)?);
        match cosine_similarity(a, b) {
            Ok(c) => {
                self.cos.push(c);
                Ok(Some(c))
            }
            Err(Error::Degenerate(_)) => {
                self.rejected += 1;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn finish(self, category: VectorCategory, bins: usize) -> Result<CategoryStats> {
        Ok(CategoryStats {
            category,
            cosine: Histogram::build(self.cos, -1.0, 1.0, bins)?,
            distance: distance_histogram(self.dist, bins)?,
            rejected_cosine: self.rejected,
        })
    }
}

fn distinct_pair(rng: &mut SeededRng, n: usize) -> (usize, usize) {
    let a = rng.below(n);
    if n == 1 {
        return (a, a);
    }
    let mut b = rng.below(n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Runs the full geometry battery on a frozen model.
///
/// Word categories use ids from 2 upward (the padding and unknown rows are
/// skipped); co-occurrence is taken within one document of `docs`.
pub fn category_statistics<T: Real>(
    model: &ModelState<T>,
    pool: &HiddenPool<T>,
    docs: &[EncodedDoc],
    config: &GeometryConfig,
) -> Result<GeometryReport> {
    if !model.is_frozen() {
        return Err(Error::config("geometry requires a frozen model"));
    }
    if model.vocab_size() < 3 {
        return Err(Error::config("vocabulary has fewer than 2 words"));
    }
    if docs.is_empty() {
        return Err(Error::config("geometry needs a non-empty document split"));
    }
    if pool.is_empty() {
        return Err(Error::config("hidden pool is empty"));
    }
    let emb = &model.params().embedding;
    let m = emb.cols();
    let rows: Vec<Vec<f64>> = (0..emb.rows())
        .map(|r| emb.row(r).iter().map(|v| v.to_f64()).collect())
        .collect();
    for d in docs {
        if let Some(&id) = d.ids.iter().find(|&&id| id >= rows.len()) {
            return Err(Error::Index {
                what: "word id",
                index: id,
                bound: rows.len(),
            });
        }
    }
    let words: Vec<usize> = (2..rows.len()).collect();
    let k = config.samples_per_category;
    let bins = config.bins;
    let stream = |c: u64| SeededRng::new(derive_seed(config.seed, &[c]));

    let global = average(m, words.iter().map(|&w| rows[w].as_slice()));
    let doc_means: Vec<Vec<f64>> = docs
        .iter()
        .map(|d| average(m, d.ids.iter().map(|&w| rows[w].as_slice())))
        .collect();
    let tangents: Vec<Vec<Vec<f64>>> = docs
        .iter()
        .map(|d| tangent_vectors(&d.ids, emb))
        .collect::<Result<_>>()?;
    let tangent_means: Vec<Option<Vec<f64>>> = tangents
        .iter()
        .map(|ts| (!ts.is_empty()).then(|| average(m, ts.iter().map(Vec::as_slice))))
        .collect();
    let multi: Vec<usize> = (0..docs.len())
        .filter(|&i| docs[i].ids.len() >= 2)
        .collect();
    let triple: Vec<usize> = (0..docs.len())
        .filter(|&i| docs[i].ids.len() >= 3)
        .collect();

    let mut categories = Vec::with_capacity(6);
    let mut unit = UnitCosineBreakdown::default();

    let mut c = Collector::default();
    let mut rng = stream(0);
    for _ in 0..k {
        let (a, b) = distinct_pair(&mut rng, words.len());
        c.push(&rows[words[a]], &rows[words[b]])?;
    }
    categories.push(c.finish(VectorCategory::RandomWordPairs, bins)?);

    let mut c = Collector::default();
    for &w in &words {
        c.push(&rows[w], &global)?;
    }
    categories.push(c.finish(VectorCategory::WordsVsGlobalAverage, bins)?);

    let mut c = Collector::default();
    let mut rng = stream(2);
    if !multi.is_empty() {
        for _ in 0..k {
            let ids = &docs[multi[rng.below(multi.len())]].ids;
            let (i, j) = distinct_pair(&mut rng, ids.len());
            let (a, b) = (ids[i], ids[j]);
            if let Some(cos) = c.push(&rows[a], &rows[b])? {
                if cos >= UNIT_COSINE {
                    if a == b {
                        unit.same_token += 1;
                        *unit.by_word.entry(a).or_insert(0) += 1;
                    } else {
                        unit.distinct_token += 1;
                    }
                }
            }
        }
    }
    categories.push(c.finish(VectorCategory::CooccurringPairs, bins)?);

    let mut c = Collector::default();
    let mut rng = stream(3);
    for _ in 0..k {
        let d = rng.below(docs.len());
        let ids = &docs[d].ids;
        if ids.is_empty() {
            continue;
        }
        c.push(&rows[ids[rng.below(ids.len())]], &doc_means[d])?;
    }
    categories.push(c.finish(VectorCategory::WordsVsCooccurringAverage, bins)?);

    let mut c = Collector::default();
    let mut rng = stream(4);
    if !triple.is_empty() {
        for _ in 0..k {
            let ts = &tangents[triple[rng.below(triple.len())]];
            let i = rng.below(ts.len() - 1);
            c.push(&ts[i], &ts[i + 1])?;
        }
    }
    categories.push(c.finish(VectorCategory::AdjacentTangents, bins)?);

    let mut c = Collector::default();
    let mut rng = stream(5);
    if !multi.is_empty() {
        for _ in 0..k {
            let d = multi[rng.below(multi.len())];
            let ts = &tangents[d];
            let mean = tangent_means[d].as_ref().expect("document has tangents");
            c.push(&ts[rng.below(ts.len())], mean)?;
        }
    }
    categories.push(c.finish(VectorCategory::TangentsVsCooccurringTangentAverage, bins)?);

    let norms = alloc::vec![
        NormSeries {
            name: "global_average",
            values: alloc::vec![norm(&global)],
        },
        NormSeries {
            name: "cooccurring_average",
            values: doc_means
                .iter()
                .zip(docs)
                .filter(|(_, d)| !d.ids.is_empty())
                .map(|(v, _)| norm(v))
                .collect(),
        },
        NormSeries {
            name: "tangent_average",
            values: tangent_means.iter().flatten().map(|v| norm(v)).collect(),
        },
    ];

    let mut effects = Vec::with_capacity(k);
    let mut rejected_effects = 0;
    let mut rng = stream(6);
    for _ in 0..k {
        let (a, b) = distinct_pair(&mut rng, words.len());
        let (w1, w2) = (words[a], words[b]);
        let h = pool.sample(&mut rng);
        let cosine = match cosine_similarity(&rows[w1], &rows[w2]) {
            Ok(c) => c,
            Err(Error::Degenerate(_)) => {
                rejected_effects += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        effects.push(EffectPoint {
            w1,
            w2,
            cosine,
            dot: dot(&rows[w1], &rows[w2]),
            distance: word_distance(&rows[w1], &rows[w2])?,
            effect: fractional_effect(model, w1, w2, h)?,
        });
    }

    Ok(GeometryReport {
        categories,
        norms,
        effects,
        rejected_effects,
        unit_cosine: unit,
        samples_per_category: k,
        bins,
        seed: config.seed,
    })
}
