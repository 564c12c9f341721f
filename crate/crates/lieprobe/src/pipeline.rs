//! Steps shared by the single-run commands and the sweep cells.

use std::path::Path;

use lieprobe_core::geometry::{
    category_statistics, GeometryConfig, GeometryReport, VectorCategory,
};
use lieprobe_core::latent::{
    default_p_grid, scan_latent_dimensions, LatentConfig, LatentScanRecord,
};
use lieprobe_core::model::EpochMetrics;
use lieprobe_core::model::{
    evaluate, fit, freeze_and_harvest, HiddenPool, ModelConfig, ModelState,
};
use lieprobe_core::probes::{ProbeConfig, ProbeEnv};

use crate::dataset::{read_embedding_import, Dataset};
use crate::error::{Error, Result};
use crate::reports::{self, write_atomic};
use crate::svg;

pub struct Trained {
    pub model: ModelState<f32>,
    pub pool: HiddenPool<f32>,
    pub history: Vec<EpochMetrics>,
    pub test_accuracy: f64,
}

/// Trains, evaluates on the test split, freezes and harvests.
pub fn train_model(
    config: &ModelConfig,
    data: &Dataset,
    embeddings: Option<&Path>,
) -> Result<Trained> {
    let mut model = ModelState::<f32>::init(config, data.vocab.len())?;
    if let Some(path) = embeddings {
        let rows = read_embedding_import(path, &data.vocab, config.embedding_dim)?;
        let emb = &mut model.params_mut()?.embedding;
        for (id, row) in rows {
            emb.row_mut(id).copy_from_slice(&row);
        }
    }
    let (model, history) = fit(model, &data.train, &data.validation)?;
    let test_accuracy = evaluate(&model, &data.test)?.accuracy;
    let (model, pool) = freeze_and_harvest(model, &data.test)?;
    Ok(Trained {
        model,
        pool,
        history,
        test_accuracy,
    })
}

/// Latent scan over `p_grid`, or the default grid for the model's `n`.
pub fn latent_scan(
    model: &ModelState<f32>,
    pool: &HiddenPool<f32>,
    data: &Dataset,
    p_grid: &[usize],
    repeats: usize,
    probe: &ProbeConfig,
    latent: &LatentConfig,
) -> Result<Vec<LatentScanRecord>> {
    let grid = if p_grid.is_empty() {
        default_p_grid(model.hidden_dim())?
    } else {
        p_grid.to_vec()
    };
    if let Some(&p) = grid.iter().find(|&&p| p == 0) {
        return Err(Error::Usage(format!(
            "latent dimension {p} is not positive"
        )));
    }
    let env = ProbeEnv::new(model, pool, &data.test)?;
    Ok(scan_latent_dimensions(&env, &grid, repeats, probe, latent)?)
}

pub fn write_latent(dir: &Path, records: &[LatentScanRecord]) -> Result<()> {
    write_atomic(
        &dir.join("latent.csv"),
        reports::latent_runs_csv(records).as_bytes(),
    )?;
    write_atomic(
        &dir.join("latent_summary.csv"),
        reports::latent_summary_csv(records).as_bytes(),
    )
}

pub fn geometry(
    model: &ModelState<f32>,
    pool: &HiddenPool<f32>,
    data: &Dataset,
    config: &GeometryConfig,
) -> Result<GeometryReport> {
    Ok(category_statistics(model, pool, &data.test, config)?)
}

/// Geometry CSV/JSON outputs plus an SVG per histogram.
pub fn write_geometry(dir: &Path, report: &GeometryReport, data: &Dataset) -> Result<()> {
    let token = |id: usize| data.vocab.token(id).unwrap_or("?").to_string();
    reports::write_geometry(dir, report, &token)?;
    for c in VectorCategory::ALL {
        let s = report.category(c);
        for (kind, h) in [("cosine", &s.cosine), ("distance", &s.distance)] {
            write_atomic(
                &dir.join(format!("{kind}_{}.svg", c.name())),
                svg::histogram(&format!("{kind}: {}", c.name()), h.min, h.max, &h.counts)
                    .as_bytes(),
            )?;
        }
    }
    Ok(())
}
