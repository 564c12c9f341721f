//! Command line entry points.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lieprobe_core::corpus::synthesize_corpus;
use lieprobe_core::model::freeze_and_harvest;
use lieprobe_core::probes::{run_seven_tests, ProbeEnv};

use crate::checkpoint;
use crate::dataset::{read_corpus, split_seed, vocabulary_json, write_corpus, Dataset};
use crate::error::{Error, Result};
use crate::pipeline;
use crate::reports::{self, write_atomic, write_json};
use crate::runner;
use crate::settings::{Overrides, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "lieprobe",
    version,
    about = "Train a GRU text classifier and probe the algebra of its word space"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic class-separable corpus to <out>/corpus.jsonl
    Synth(Common),
    /// Train one (m, n) model and save a frozen checkpoint
    Train(Common),
    /// Run the seven axiom tests on a checkpoint
    Probe(Common),
    /// Scan latent dimensions with projected axiom losses
    LatentScan(Common),
    /// Compute the embedding geometry battery
    Geometry(Common),
    /// Train and probe every cell of the (m, n) grid
    Sweep(Common),
    /// Aggregate a sweep directory into figure data
    Report(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat key = value settings file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

impl Common {
    pub fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            s.load_file(path)?;
        }
        self.overrides.overlay(&mut s);
        Ok(s)
    }
}

fn corpus_path(s: &Settings) -> Result<PathBuf> {
    if s.corpus.is_empty() {
        return Err(Error::Usage("--corpus is required".into()));
    }
    Ok(PathBuf::from(&s.corpus))
}

fn checkpoint_path(s: &Settings) -> PathBuf {
    if s.checkpoint.is_empty() {
        Path::new(&s.out).join(runner::CHECKPOINT)
    } else {
        PathBuf::from(&s.checkpoint)
    }
}

/// Loads the checkpoint and re-derives its splits from the corpus.
fn load_frozen(s: &Settings) -> Result<(checkpoint::Checkpoint, Dataset)> {
    let ck = checkpoint::load(&checkpoint_path(s))?;
    let (docs, _) = read_corpus(&corpus_path(s)?)?;
    let data = Dataset::with_vocabulary(&docs, ck.split_seed, ck.vocab.clone())?;
    Ok((ck, data))
}

fn log(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => synth(&c.settings()?),
        Command::Train(c) => train(&c.settings()?),
        Command::Probe(c) => probe(&c.settings()?),
        Command::LatentScan(c) => latent_scan(&c.settings()?),
        Command::Geometry(c) => geometry(&c.settings()?),
        Command::Sweep(c) => sweep(&c.settings()?),
        Command::Report(c) => report(&c.settings()?),
    }
}

fn synth(s: &Settings) -> Result<()> {
    let docs = synthesize_corpus(&s.synth_spec())?;
    let path = Path::new(&s.out).join("corpus.jsonl");
    std::fs::create_dir_all(&s.out).map_err(|e| Error::io(Path::new(&s.out), e))?;
    write_corpus(&path, &docs)?;
    println!("{} documents written to {}", docs.len(), path.display());
    Ok(())
}

fn train(s: &Settings) -> Result<()> {
    let (docs, skipped) = read_corpus(&corpus_path(s)?)?;
    if skipped > 0 {
        log(format!("skipped {skipped} documents without tokens"));
    }
    let data = Dataset::prepare(&docs, split_seed(s.seed), s.min_count)?;
    let config = s.model_config(data.classes);
    log(format!(
        "train {} / validation {} / test {} documents, {} classes, vocabulary {}",
        data.train.len(),
        data.validation.len(),
        data.test.len(),
        data.classes,
        data.vocab.len()
    ));
    let embeddings = (!s.embeddings.is_empty()).then(|| PathBuf::from(&s.embeddings));
    let trained = pipeline::train_model(&config, &data, embeddings.as_deref())?;
    let out = Path::new(&s.out);
    let image = checkpoint::encode(&trained.model, &data.vocab, data.split_seed);
    let ck_path = checkpoint_path(s);
    write_atomic(&ck_path, &image)?;
    write_atomic(
        &out.join("metrics.csv"),
        reports::metrics_csv(&trained.history).as_bytes(),
    )?;
    write_atomic(
        &out.join("vocab.json"),
        vocabulary_json(&data.vocab).as_bytes(),
    )?;
    let digest = checkpoint::digest(&image);
    write_json(
        &out.join("train.json"),
        &serde_json::json!({
            "m": config.embedding_dim,
            "n": config.hidden_dim,
            "classes": data.classes,
            "vocabulary": data.vocab.len(),
            "test_accuracy": trained.test_accuracy,
            "pool_states": trained.pool.len(),
            "pool_min_norm": trained.pool.min_norm(),
            "checkpoint_sha256": digest,
        }),
    )?;
    println!("test accuracy {:.4}", trained.test_accuracy);
    println!("checkpoint {} sha256 {digest}", ck_path.display());
    Ok(())
}

fn probe(s: &Settings) -> Result<()> {
    let (ck, data) = load_frozen(s)?;
    let (model, pool) = freeze_and_harvest(ck.model, &data.test)?;
    let env = ProbeEnv::new(&model, &pool, &data.test)?;
    let results = run_seven_tests(&env, &s.probe_config())?;
    write_json(
        &Path::new(&s.out).join("probes.json"),
        &reports::probe_entries(&results),
    )?;
    println!("{:<24} {:>12} satisfied", "test", "loss");
    for r in &results {
        println!(
            "{:<24} {:>12.6} {}",
            r.test.name(),
            r.final_loss,
            r.satisfied
        );
    }
    Ok(())
}

fn latent_scan(s: &Settings) -> Result<()> {
    let (ck, data) = load_frozen(s)?;
    let (model, pool) = freeze_and_harvest(ck.model, &data.test)?;
    let records = pipeline::latent_scan(
        &model,
        &pool,
        &data,
        &s.p_grid.0,
        s.repeats,
        &s.probe_config(),
        &s.latent_config(),
    )?;
    pipeline::write_latent(Path::new(&s.out), &records)?;
    for rec in &records {
        for (name, mean, std) in &rec.summary {
            println!("p={:<4} {:<34} {:.6} ± {:.6}", rec.p, name, mean, std);
        }
    }
    Ok(())
}

fn geometry(s: &Settings) -> Result<()> {
    let (ck, data) = load_frozen(s)?;
    let (model, pool) = freeze_and_harvest(ck.model, &data.test)?;
    let report = pipeline::geometry(&model, &pool, &data, &s.geometry_config())?;
    let dir = Path::new(&s.out).join("geometry");
    pipeline::write_geometry(&dir, &report, &data)?;
    println!("geometry written to {}", dir.display());
    Ok(())
}

fn sweep(s: &Settings) -> Result<()> {
    let (docs, _) = read_corpus(&corpus_path(s)?)?;
    let data = Dataset::prepare(&docs, split_seed(s.seed), s.min_count)?;
    let summary = runner::run_sweep(s, &data, Path::new(&s.out))?;
    println!(
        "{} cells run, {} already complete, {} failed",
        summary.ran.len(),
        summary.skipped.len(),
        summary.failed.len()
    );
    for (m, n, e) in &summary.failed {
        println!("  m={m} n={n}: {e}");
    }
    if summary.failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Experiment(format!(
            "{} sweep cells failed",
            summary.failed.len()
        )))
    }
}

fn report(s: &Settings) -> Result<()> {
    let files = runner::write_reports(Path::new(&s.out))?;
    for f in files {
        println!("{f}");
    }
    Ok(())
}
