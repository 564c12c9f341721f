//! CSV and JSON outputs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! identical runs produce identical bytes and parsing a file back yields
//! the exact values. Missing values are empty CSV fields or JSON `null`.

use std::fs;
use std::path::Path;

use lieprobe_core::geometry::{GeometryReport, Histogram, VectorCategory};
use lieprobe_core::latent::LatentScanRecord;
use lieprobe_core::model::EpochMetrics;
use lieprobe_core::probes::ProbeResult;
use lieprobe_core::sweep::{contour_rows, FisherReport, Metric, SweepRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Builds CSV text from a header and string rows.
pub fn csv_text<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.as_ref()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn write_csv<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    write_atomic(path, csv_text(header, rows).as_bytes())
}

/// Reads a CSV file into header and rows of strings.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let header = r
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let rows: Vec<Vec<String>> = history
        .iter()
        .map(|m| {
            vec![
                m.epoch.to_string(),
                m.split.name().to_string(),
                num(m.loss),
                num(m.accuracy),
            ]
        })
        .collect();
    csv_text(&["epoch", "split", "loss", "accuracy"], &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub test: String,
    pub final_loss: Option<f64>,
    pub satisfied: bool,
    pub initial_loss: Option<f64>,
    pub initial_train_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub groups: usize,
    pub train_instances: usize,
    pub eval_instances: usize,
    pub epochs: usize,
    pub seed: u64,
    pub diverged: bool,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl<T> From<&ProbeResult<T>> for ProbeEntry {
    fn from(r: &ProbeResult<T>) -> Self {
        Self {
            test: r.test.name().to_string(),
            final_loss: finite(r.final_loss),
            satisfied: r.satisfied,
            initial_loss: finite(r.initial_loss),
            initial_train_loss: finite(r.initial_train_loss),
            final_train_loss: finite(r.final_train_loss),
            groups: r.groups,
            train_instances: r.train_instances,
            eval_instances: r.eval_instances,
            epochs: r.epochs,
            seed: r.seed,
            diverged: r.diverged,
        }
    }
}

pub fn probe_entries<T>(results: &[ProbeResult<T>]) -> Vec<ProbeEntry> {
    results.iter().map(ProbeEntry::from).collect()
}

/// `(p, repeat, test, loss)` rows.
pub fn latent_runs_csv(records: &[LatentScanRecord]) -> String {
    let mut rows = Vec::new();
    for rec in records {
        for run in &rec.runs {
            for (name, loss) in &run.losses {
                rows.push(vec![
                    rec.p.to_string(),
                    run.repeat.to_string(),
                    (*name).to_string(),
                    num(*loss),
                ]);
            }
        }
    }
    csv_text(&["p", "repeat", "test", "loss"], &rows)
}

/// `(p, test, mean_loss, std)` rows.
pub fn latent_summary_csv(records: &[LatentScanRecord]) -> String {
    let mut rows = Vec::new();
    for rec in records {
        for (name, mean, std) in &rec.summary {
            rows.push(vec![
                rec.p.to_string(),
                (*name).to_string(),
                num(*mean),
                num(*std),
            ]);
        }
    }
    csv_text(&["p", "test", "mean_loss", "std"], &rows)
}

pub fn histogram_csv(h: &Histogram) -> String {
    let edges = h.edges();
    let rows: Vec<Vec<String>> = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| vec![num(edges[i]), num(edges[i + 1]), c.to_string()])
        .collect();
    csv_text(&["bin_left", "bin_right", "count"], &rows)
}

pub fn scatter_csv(points: &[(f64, f64)]) -> String {
    let rows: Vec<Vec<String>> = points.iter().map(|(x, y)| vec![num(*x), num(*y)]).collect();
    csv_text(&["x", "y"], &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                count: 0,
                mean: None,
                min: None,
                max: None,
            };
        }
        Self {
            count: values.len(),
            mean: Some(values.iter().sum::<f64>() / values.len() as f64),
            min: values.iter().copied().reduce(f64::min),
            max: values.iter().copied().reduce(f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: String,
    pub cosine: Summary,
    pub distance: Summary,
    pub rejected_cosine: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCosineSummary {
    pub same_token: usize,
    pub distinct_token: usize,
    /// Same-token spike counts per token text.
    pub by_token: std::collections::BTreeMap<String, usize>,
    /// Same-token spikes whose token is a single punctuation character.
    pub punctuation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub seed: u64,
    pub samples_per_category: usize,
    pub bins: usize,
    pub categories: Vec<CategorySummary>,
    pub norms: std::collections::BTreeMap<String, Summary>,
    pub effect: Summary,
    pub rejected_effects: usize,
    pub unit_cosine: UnitCosineSummary,
}

/// Writes `summary.json` plus one CSV per histogram and scatter series
/// into `dir`; `token` maps ids to text for the unit-cosine breakdown.
pub fn write_geometry(
    dir: &Path,
    r: &GeometryReport,
    token: &dyn Fn(usize) -> String,
) -> Result<()> {
    let mut categories = Vec::new();
    for c in VectorCategory::ALL {
        let s = r.category(c);
        write_atomic(
            &dir.join(format!("cosine_{}.csv", c.name())),
            histogram_csv(&s.cosine).as_bytes(),
        )?;
        write_atomic(
            &dir.join(format!("distance_{}.csv", c.name())),
            histogram_csv(&s.distance).as_bytes(),
        )?;
        categories.push(CategorySummary {
            category: c.name().to_string(),
            cosine: Summary::of(&s.cosine.samples),
            distance: Summary::of(&s.distance.samples),
            rejected_cosine: s.rejected_cosine,
        });
    }
    let mut norms = std::collections::BTreeMap::new();
    for series in &r.norms {
        let max = series.values.iter().copied().fold(0.0, f64::max);
        let h = Histogram::build(
            series.values.clone(),
            0.0,
            if max > 0.0 { max } else { 1.0 },
            r.bins,
        )?;
        write_atomic(
            &dir.join(format!("norm_{}.csv", series.name)),
            histogram_csv(&h).as_bytes(),
        )?;
        norms.insert(series.name.to_string(), Summary::of(&series.values));
    }
    write_atomic(
        &dir.join("effect_vs_cosine.csv"),
        scatter_csv(&r.effect_vs_cosine()).as_bytes(),
    )?;
    write_atomic(
        &dir.join("effect_vs_distance.csv"),
        scatter_csv(&r.effect_vs_distance()).as_bytes(),
    )?;
    let rows: Vec<Vec<String>> = r
        .effects
        .iter()
        .map(|p| {
            vec![
                p.w1.to_string(),
                p.w2.to_string(),
                num(p.cosine),
                num(p.dot),
                num(p.distance),
                num(p.effect),
            ]
        })
        .collect();
    write_csv(
        &dir.join("effect_points.csv"),
        &["w1", "w2", "cosine", "dot", "distance", "effect"],
        &rows,
    )?;
    let by_token: std::collections::BTreeMap<String, usize> = r
        .unit_cosine
        .by_word
        .iter()
        .map(|(&id, &c)| (token(id), c))
        .collect();
    let punctuation = by_token
        .iter()
        .filter(|(t, _)| {
            let mut ch = t.chars();
            matches!((ch.next(), ch.next()), (Some(c), None) if c.is_ascii_punctuation())
        })
        .map(|(_, c)| c)
        .sum();
    let effects: Vec<f64> = r.effects.iter().map(|p| p.effect).collect();
    write_json(
        &dir.join("summary.json"),
        &GeometrySummary {
            seed: r.seed,
            samples_per_category: r.samples_per_category,
            bins: r.bins,
            categories,
            norms,
            effect: Summary::of(&effects),
            rejected_effects: r.rejected_effects,
            unit_cosine: UnitCosineSummary {
                same_token: r.unit_cosine.same_token,
                distinct_token: r.unit_cosine.distinct_token,
                by_token,
                punctuation,
            },
        },
    )
}

/// `(m, n, value)` rows; missing cells have an empty value.
pub fn contour_csv(records: &[SweepRecord], metric: Metric) -> String {
    let rows: Vec<Vec<String>> = contour_rows(records, metric)
        .into_iter()
        .map(|(m, n, v)| vec![m.to_string(), n.to_string(), opt(v)])
        .collect();
    csv_text(&["m", "n", "value"], &rows)
}

/// Parses a contour CSV back into `(m, n, value)` rows.
pub fn parse_contour(text: &str) -> std::result::Result<Vec<(usize, usize, Option<f64>)>, String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let field = |i: usize| rec.get(i).ok_or_else(|| format!("missing column {i}"));
        let m = field(0)?.parse().map_err(|e| format!("m: {e}"))?;
        let n = field(1)?.parse().map_err(|e| format!("n: {e}"))?;
        let v = field(2)?;
        let v = if v.is_empty() {
            None
        } else {
            Some(v.parse().map_err(|e| format!("value: {e}"))?)
        };
        out.push((m, n, v));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherJson {
    pub embedding: Option<f64>,
    pub hidden: Option<f64>,
    pub ratio: Option<f64>,
    pub error: Option<String>,
}

impl FisherJson {
    pub fn from_result(r: std::result::Result<FisherReport, lieprobe_core::Error>) -> Self {
        match r {
            Ok(f) => Self {
                embedding: Some(f.embedding),
                hidden: Some(f.hidden),
                ratio: f.ratio,
                error: None,
            },
            Err(e) => Self {
                embedding: None,
                hidden: None,
                ratio: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contour_round_trip() {
        let recs: Vec<SweepRecord> = [(20, 20, 0.5), (20, 40, 0.1 + 0.2), (40, 20, 1.0 / 3.0)]
            .iter()
            .map(|&(m, n, a)| SweepRecord {
                m,
                n,
                seed: 0,
                test_accuracy: a,
                probe_losses: None,
            })
            .collect();
        let text = contour_csv(&recs, Metric::Accuracy);
        assert_eq!(text.lines().count(), 5);
        let back = parse_contour(&text).unwrap();
        assert_eq!(
            back,
            vec![
                (20, 20, Some(0.5)),
                (20, 40, Some(0.1 + 0.2)),
                (40, 20, Some(1.0 / 3.0)),
                (40, 40, None)
            ]
        );
    }

    #[test]
    fn histogram_rows_cover_edges() {
        let h = Histogram::build(vec![0.1, 0.9, 0.95], 0.0, 1.0, 2).unwrap();
        assert_eq!(
            histogram_csv(&h),
            "bin_left,bin_right,count\n0,0.5,1\n0.5,1,2\n"
        );
    }
}
