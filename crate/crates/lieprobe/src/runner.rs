//! Grid sweep over `(m, n)` with per-cell output directories.
//!
//! ```text
//! <out>/cells/m{M}_n{N}/  checkpoint.lpck metrics.csv probes.json
//!                         latent.csv latent_summary.csv geometry/
//!                         record.json (written last) timing.json
//! <out>/reports/          accuracy_grid.csv probe_grids/*.csv fisher.json
//!                         manifest.json *.svg
//! ```
//!
//! A cell whose `record.json` exists is complete and is skipped on rerun.
//! Every cell draws its seeds from `(seed, m, n)` alone, so results do not
//! depend on thread count or execution order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use lieprobe_core::probes::{run_seven_tests, ProbeEnv, TestKind};
use lieprobe_core::rng::derive_seed;
use lieprobe_core::sweep::{fisher_report, GridSpec, Metric, SweepRecord};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline;
use crate::reports::{self, write_atomic, write_json, FisherJson};
use crate::settings::Settings;
use crate::svg;

/// `(m, n, message)` of a cell that left an `error.txt`.
pub type FailedCellError = (usize, usize, String);

pub const RECORD: &str = "record.json";
pub const CHECKPOINT: &str = "checkpoint.lpck";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    /// Smallest norm among harvested hidden states.
    pub pool_min_norm: f64,
    pub checkpoint: String,
    /// Final loss per probe test; absent when probes were not run.
    pub probe_losses: Option<BTreeMap<String, Option<f64>>>,
}

impl RecordJson {
    pub fn to_record(&self) -> SweepRecord {
        let probe_losses = self.probe_losses.as_ref().map(|map| {
            let mut l = [f64::NAN; 7];
            for t in TestKind::ALL {
                if let Some(Some(v)) = map.get(t.name()) {
                    l[t.index()] = *v;
                }
            }
            l
        });
        SweepRecord {
            m: self.m,
            n: self.n,
            seed: self.seed,
            test_accuracy: self.test_accuracy,
            probe_losses,
        }
    }
}

pub fn cell_dir(out: &Path, m: usize, n: usize) -> PathBuf {
    out.join("cells").join(format!("m{m}_n{n}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSummary {
    pub ran: Vec<(usize, usize)>,
    pub skipped: Vec<(usize, usize)>,
    pub failed: Vec<(usize, usize, String)>,
}

/// Runs one cell end to end and writes its directory.
fn run_cell(
    settings: &Settings,
    spec: &GridSpec,
    data: &Dataset,
    m: usize,
    n: usize,
    dir: &Path,
) -> Result<()> {
    let started = Instant::now();
    let experiments = settings.experiment_set()?;
    let config = spec.cell_config(m, n);
    let trained = pipeline::train_model(&config, data, None)?;
    checkpoint::save(
        &dir.join(CHECKPOINT),
        &trained.model,
        &data.vocab,
        data.split_seed,
    )?;
    write_atomic(
        &dir.join("metrics.csv"),
        reports::metrics_csv(&trained.history).as_bytes(),
    )?;
    let seed = config.seed;
    let mut probe_losses = None;
    if experiments.probes {
        let env = ProbeEnv::new(&trained.model, &trained.pool, &data.test)?;
        let pc = lieprobe_core::probes::ProbeConfig {
            seed: derive_seed(seed, &[0x7072_6f62]),
            ..settings.probe_config()
        };
        let results = run_seven_tests(&env, &pc)?;
        write_json(&dir.join("probes.json"), &reports::probe_entries(&results))?;
        probe_losses = Some(
            results
                .iter()
                .map(|r| {
                    (
                        r.test.name().to_string(),
                        r.final_loss.is_finite().then_some(r.final_loss),
                    )
                })
                .collect(),
        );
    }
    if experiments.latent {
        let pc = lieprobe_core::probes::ProbeConfig {
            seed: derive_seed(seed, &[0x6c61_7465]),
            ..settings.probe_config()
        };
        let records = pipeline::latent_scan(
            &trained.model,
            &trained.pool,
            data,
            &settings.p_grid.0,
            settings.repeats,
            &pc,
            &settings.latent_config(),
        )?;
        pipeline::write_latent(dir, &records)?;
    }
    if experiments.geometry {
        let gc = lieprobe_core::geometry::GeometryConfig {
            seed: derive_seed(seed, &[0x6765_6f6d]),
            ..settings.geometry_config()
        };
        let report = pipeline::geometry(&trained.model, &trained.pool, data, &gc)?;
        pipeline::write_geometry(&dir.join("geometry"), &report, data)?;
    }
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({ "wall_seconds": started.elapsed().as_secs_f64() }),
    )?;
    write_json(
        &dir.join(RECORD),
        &RecordJson {
            m,
            n,
            seed,
            test_accuracy: trained.test_accuracy,
            pool_min_norm: trained.pool.min_norm(),
            checkpoint: CHECKPOINT.to_string(),
            probe_losses,
        },
    )
}

/// Runs every incomplete cell on up to `settings.threads` workers, then
/// writes the aggregate reports. A failing cell leaves an `error.txt` and
/// does not stop the others.
pub fn run_sweep(settings: &Settings, data: &Dataset, out: &Path) -> Result<SweepSummary> {
    settings.experiment_set()?;
    let spec = GridSpec::new(
        settings.m_grid.0.clone(),
        settings.n_grid.0.clone(),
        settings.model_config(data.classes),
        settings.seed,
    )?;
    let cells = spec.cells();
    let next = AtomicUsize::new(0);
    let outcome: Mutex<BTreeMap<(usize, usize), std::result::Result<bool, String>>> =
        Mutex::new(BTreeMap::new());
    let threads = settings.threads.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(m, n)) = cells.get(i) else { break };
                let dir = cell_dir(out, m, n);
                let result = if dir.join(RECORD).exists() {
                    Ok(false)
                } else {
                    let _ = fs::remove_file(dir.join("error.txt"));
                    fs::create_dir_all(&dir)
                        .map_err(|e| Error::io(&dir, e))
                        .and_then(|_| run_cell(settings, &spec, data, m, n, &dir))
                        .map(|_| true)
                        .map_err(|e| {
                            let msg = e.to_string();
                            let _ = fs::write(dir.join("error.txt"), format!("{msg}\n"));
                            msg
                        })
                };
                outcome
                    .lock()
                    .expect("no poisoned workers")
                    .insert((m, n), result);
            });
        }
    });
    let mut summary = SweepSummary {
        ran: Vec::new(),
        skipped: Vec::new(),
        failed: Vec::new(),
    };
    for ((m, n), r) in outcome.into_inner().expect("no poisoned workers") {
        match r {
            Ok(true) => summary.ran.push((m, n)),
            Ok(false) => summary.skipped.push((m, n)),
            Err(e) => summary.failed.push((m, n, e)),
        }
    }
    write_reports(out)?;
    Ok(summary)
}

fn parse_cell_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix('m')?;
    let (m, n) = rest.split_once("_n")?;
    Some((m.parse().ok()?, n.parse().ok()?))
}

/// Completed records and failed cells found under `<out>/cells`, in
/// `(m, n)` order.
pub fn collect(out: &Path) -> Result<(Vec<RecordJson>, Vec<FailedCellError>)> {
    let cells = out.join("cells");
    let entries = fs::read_dir(&cells).map_err(|e| match Error::io(&cells, e) {
        Error::Missing { path, .. } => Error::Missing {
            what: "sweep directory",
            path,
        },
        other => other,
    })?;
    let mut found = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&cells, e))?;
        if let Some(key) = entry.file_name().to_str().and_then(parse_cell_name) {
            found.insert(key, entry.path());
        }
    }
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for ((m, n), dir) in found {
        let rec = dir.join(RECORD);
        if rec.exists() {
            records.push(reports::read_json::<RecordJson>(&rec)?);
        } else if let Ok(msg) = fs::read_to_string(dir.join("error.txt")) {
            failed.push((m, n, msg.trim().to_string()));
        }
    }
    Ok((records, failed))
}

#[derive(Debug, Serialize)]
struct ReportManifest {
    cells: Vec<String>,
    failed: Vec<FailedCell>,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct FailedCell {
    m: usize,
    n: usize,
    error: String,
}

fn heatmap_for(records: &[SweepRecord], metric: Metric) -> String {
    let rows = lieprobe_core::sweep::contour_rows(records, metric);
    let mut ms: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let mut ns: Vec<usize> = rows.iter().map(|r| r.1).collect();
    ms.dedup();
    ns.sort_unstable();
    ns.dedup();
    let grid: Vec<Vec<Option<f64>>> = ms
        .iter()
        .map(|&m| {
            ns.iter()
                .map(|&n| rows.iter().find(|r| r.0 == m && r.1 == n).and_then(|r| r.2))
                .collect()
        })
        .collect();
    svg::heatmap(
        &format!("{} (rows m, columns n)", metric.name()),
        &ms,
        &ns,
        &grid,
    )
}

/// Aggregates `<out>/cells` into `<out>/reports`.
pub fn write_reports(out: &Path) -> Result<Vec<String>> {
    let (records, failed) = collect(out)?;
    let dir = out.join("reports");
    let sweep: Vec<SweepRecord> = records.iter().map(RecordJson::to_record).collect();
    let mut files = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        write_atomic(&dir.join(&name), text.as_bytes())?;
        files.push(name);
        Ok(())
    };
    if !sweep.is_empty() {
        put(
            "accuracy_grid.csv".into(),
            reports::contour_csv(&sweep, Metric::Accuracy),
        )?;
        put(
            "accuracy_grid.svg".into(),
            heatmap_for(&sweep, Metric::Accuracy),
        )?;
        if sweep.iter().any(|r| r.probe_losses.is_some()) {
            for t in TestKind::ALL {
                let metric = Metric::Probe(t);
                put(
                    format!("probe_grids/{}.csv", t.name()),
                    reports::contour_csv(&sweep, metric),
                )?;
                put(format!("{}.svg", t.name()), heatmap_for(&sweep, metric))?;
            }
        }
    }
    let fisher = FisherJson::from_result(fisher_report(&sweep));
    write_json(&dir.join("fisher.json"), &fisher)?;
    files.push("fisher.json".into());
    files.sort();
    write_json(
        &dir.join("manifest.json"),
        &ReportManifest {
            cells: records
                .iter()
                .map(|r| format!("m{}_n{}", r.m, r.n))
                .collect(),
            failed: failed
                .into_iter()
                .map(|(m, n, error)| FailedCell { m, n, error })
                .collect(),
            files: files.clone(),
        },
    )?;
    Ok(files)
}
