//! Training and evaluation of stored runs, shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use geossl::data::{load_dataset, DatasetHandle, LoadOptions};
use geossl::evaluation::{embed_checkpoint, linear_eval, EvalReport, LinearEvalConfig};
use geossl::training::{run_training, CheckpointRecord, CheckpointSeries, ExperimentConfig, Precision, RunOptions, StepRecord};

use crate::manifest::{unix_now, RunManifest, RunStatus, RunStore, CONFIG_FILE};

/// Loads the dataset a config trains on, or `name` with the same root.
pub fn dataset_for(cfg: &ExperimentConfig, name: Option<&str>) -> Result<DatasetHandle> {
    match name {
        Some(n) if n != cfg.data.dataset => {
            let opts = LoadOptions { root: cfg.data.root.clone(), seed: cfg.data.seed, ..LoadOptions::default() };
            Ok(load_dataset(n, &opts)?)
        }
        _ => Ok(load_dataset(&cfg.data.dataset, &cfg.data.load_options())?),
    }
}

/// Trains (or resumes) run `run_id` and finalizes its manifest.
pub fn train_run(store: &RunStore, run_id: &str, cfg: &ExperimentConfig, progress: bool) -> Result<RunManifest> {
    let mut manifest = if store.exists(run_id) {
        let m = store.load(run_id)?;
        if &m.config != cfg {
            return Err(geossl::Error::Config(format!("run `{run_id}` exists with a different configuration")).into());
        }
        if m.status == RunStatus::Completed {
            return Ok(m);
        }
        RunManifest { status: RunStatus::Running, error: None, finished_unix: None, ..m }
    } else {
        RunManifest::new(run_id, cfg.clone())
    };
    let dir = store.run_dir(run_id);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    store.save(&manifest)?;

    let result = (|| -> Result<(usize, String)> {
        let ds = dataset_for(cfg, None)?;
        let opts = RunOptions { progress, ..RunOptions::new(&dir) };
        Ok(match cfg.precision {
            Precision::F32 => {
                let out = run_training::<f32>(cfg, &ds, &opts)?;
                (out.series.last().map_or(0, |e| e.epoch), out.bundle.param_hash())
            }
            Precision::F64 => {
                let out = run_training::<f64>(cfg, &ds, &opts)?;
                (out.series.last().map_or(0, |e| e.epoch), out.bundle.param_hash())
            }
        })
    })();
    manifest.finished_unix = Some(unix_now());
    match result {
        Ok((epoch, hash)) => {
            manifest.status = RunStatus::Completed;
            manifest.final_epoch = Some(epoch);
            manifest.param_hash = Some(hash);
            store.save(&manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(format!("{e:#}"));
            store.save(&manifest)?;
            Err(e)
        }
    }
}

/// Checkpoint series of a run, with paths resolved against its directory.
pub fn series_for(store: &RunStore, run_id: &str) -> Result<CheckpointSeries> {
    let m = store.load(run_id)?;
    let dir = store.run_dir(run_id);
    let path = dir.join(&m.artifacts.checkpoints);
    if !path.exists() {
        bail!("run `{run_id}` has no checkpoints");
    }
    let mut series = CheckpointSeries::load(&path)?;
    for e in &mut series.entries {
        e.path = locate_checkpoint(&dir, &e.path);
    }
    Ok(series)
}

fn locate_checkpoint(dir: &Path, recorded: &Path) -> PathBuf {
    if recorded.exists() {
        return recorded.to_path_buf();
    }
    match recorded.file_name() {
        Some(f) => dir.join("checkpoints").join(f),
        None => recorded.to_path_buf(),
    }
}

pub fn metrics_for(store: &RunStore, run_id: &str) -> Result<Vec<StepRecord>> {
    let m = store.load(run_id)?;
    Ok(geossl::training::read_metrics(&store.run_dir(run_id).join(&m.artifacts.metrics), None)?)
}

/// Linear evaluation of a checkpoint without caching.
pub fn evaluate_checkpoint(path: &Path, ds: &DatasetHandle, eval: &LinearEvalConfig, seed: u64) -> Result<EvalReport> {
    let emb = embed_checkpoint(path, &ds.train, &ds.test, &ds.stats, None)?;
    Ok(linear_eval(&emb.train.0, &emb.train.1, &emb.test.0, &emb.test.1, eval, seed)?)
}

pub fn eval_cache_path(run_dir: &Path, dataset: &str, epoch: usize) -> PathBuf {
    run_dir.join("eval").join(dataset).join(format!("epoch_{epoch:04}.json"))
}

/// Linear evaluation of one checkpoint of a run, cached under the run
/// directory. A cache entry made with a different probe config is redone.
pub fn eval_entry(
    run_dir: &Path,
    entry: &CheckpointRecord,
    ds: &DatasetHandle,
    dataset: &str,
    eval: &LinearEvalConfig,
    seed: u64,
) -> Result<EvalReport> {
    let cache = eval_cache_path(run_dir, dataset, entry.epoch);
    if let Ok(raw) = fs::read(&cache) {
        if let Ok(rep) = serde_json::from_slice::<EvalReport>(&raw) {
            if &rep.config == eval {
                return Ok(rep);
            }
        }
    }
    let rep = evaluate_checkpoint(&entry.path, ds, eval, seed)?;
    if let Some(parent) = cache.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = cache.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(&rep)?)?;
    fs::rename(&tmp, &cache)?;
    Ok(rep)
}

/// Evaluates the listed epochs of a run (all when `epochs` is `None`).
pub fn eval_run(
    store: &RunStore,
    run_id: &str,
    dataset: Option<&str>,
    eval: Option<&LinearEvalConfig>,
    epochs: Option<&[usize]>,
) -> Result<Vec<(usize, EvalReport)>> {
    let m = store.load(run_id)?;
    let series = series_for(store, run_id)?;
    let ds = dataset_for(&m.config, dataset)?;
    let label = dataset.unwrap_or(&m.config.data.dataset);
    let eval = eval.unwrap_or(&m.config.eval);
    let dir = store.run_dir(run_id);
    let mut out = Vec::new();
    for e in &series.entries {
        if epochs.map_or(true, |l| l.contains(&e.epoch)) {
            out.push((e.epoch, eval_entry(&dir, e, &ds, label, eval, m.config.seed)?));
        }
    }
    if out.is_empty() {
        bail!("run `{run_id}` has no checkpoint at the requested epochs");
    }
    Ok(out)
}
