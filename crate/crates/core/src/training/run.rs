use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, read_header, save_checkpoint, EpochLosses};
use super::config::{ExperimentConfig, Method};
use super::schedule::lr_at;
use super::step::{train_step_byol, train_step_simclr, TrainBatch};
use crate::augmentation::TripleSampler;
use crate::data::{ChannelStats, DatasetHandle, Split};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::ModelBundle;
use crate::nn::Optimizer;
use crate::objectives::LossReport;
use crate::rng::{rng_for, Stream};
use crate::scalar::Scalar;

/// One line of the metrics stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub path: PathBuf,
    pub losses: Option<EpochLosses>,
}

/// Checkpoints of one run in epoch order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSeries {
    pub entries: Vec<CheckpointRecord>,
}

impl CheckpointSeries {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&CheckpointRecord> {
        self.entries.last()
    }

    /// Epochs strictly increasing and every file present with a valid header.
    pub fn verify(&self) -> Result<()> {
        if self.entries.windows(2).any(|w| w[1].epoch <= w[0].epoch) {
            return Err(Error::Checkpoint("checkpoint epochs are not strictly increasing".into()));
        }
        for e in &self.entries {
            read_header(&e.path)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SERIES_FILE: &str = "checkpoints.json";

pub fn checkpoint_path(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir.join("checkpoints").join(format!("epoch_{epoch:04}.ckpt"))
}

/// Mini-batches of an epoch: a seeded permutation cut into full batches.
/// A dataset smaller than the batch size forms a single batch.
pub fn epoch_batches(seed: u64, epoch: usize, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, Stream::Shuffle, &[epoch as u64]));
    let b = batch_size.min(n).max(1);
    order.chunks_exact(b).map(|c| c.to_vec()).collect()
}

/// Owns the model and optimizer and advances them one epoch at a time.
#[derive(Debug)]
pub struct Trainer<T> {
    pub cfg: ExperimentConfig,
    pub bundle: ModelBundle<T>,
    pub optimizer: Optimizer<T>,
    pub stats: ChannelStats,
    sampler: TripleSampler,
    pub steps_per_epoch: usize,
    pub step: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(cfg: ExperimentConfig, train_len: usize, stats: ChannelStats) -> Result<Self> {
        cfg.validate()?;
        let bundle = ModelBundle::new(cfg.bundle_spec(), cfg.seed)?;
        let optimizer = Optimizer::new(cfg.optimizer.clone());
        Self::assemble(cfg, bundle, optimizer, train_len, stats, 0)
    }

    fn assemble(
        cfg: ExperimentConfig,
        bundle: ModelBundle<T>,
        optimizer: Optimizer<T>,
        train_len: usize,
        stats: ChannelStats,
        step: usize,
    ) -> Result<Self> {
        if train_len == 0 {
            return Err(Error::Data("empty training split".into()));
        }
        let sampler = TripleSampler::new(cfg.b1.clone(), cfg.b2.clone())?.with_second_warp(cfg.two_modules);
        let steps_per_epoch = epoch_batches(cfg.seed, 1, train_len, cfg.batch_size).len();
        Ok(Self { cfg, bundle, optimizer, stats, sampler, steps_per_epoch, step })
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch * self.cfg.epochs
    }

    pub fn warmup_steps(&self) -> usize {
        self.steps_per_epoch * self.cfg.warmup_epochs
    }

    /// Views for the given samples. The per-sample stream is keyed by
    /// `(seed, epoch, index)`; B1 draws precede B2 draws.
    pub fn make_batch(&self, epoch: usize, indices: &[usize], images: &[Image<u8>]) -> Result<TrainBatch<T>> {
        let seed = self.cfg.seed;
        if self.cfg.uses_module() {
            let triples = indices
                .iter()
                .map(|&i| {
                    let mut rng = rng_for(seed, Stream::Views, &[epoch as u64, i as u64]);
                    self.sampler.triple(&Image::<T>::from_u8(&images[i]), &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            TrainBatch::from_triples(&triples, &self.stats)
        } else {
            let pairs: Vec<_> = indices
                .iter()
                .map(|&i| {
                    let mut rng = rng_for(seed, Stream::Views, &[epoch as u64, i as u64]);
                    let (_, _, a, b) = self.sampler.views(&Image::<T>::from_u8(&images[i]), &mut rng);
                    (a, b)
                })
                .collect();
            TrainBatch::from_pairs(&pairs, &self.stats)
        }
    }

    pub fn train_step(&mut self, batch: &TrainBatch<T>) -> Result<(f64, LossReport)> {
        let lr = lr_at(self.step + 1, self.total_steps(), self.warmup_steps(), self.cfg.optimizer.lr);
        let rep = match self.cfg.method {
            Method::Simclr => train_step_simclr(&mut self.bundle, &mut self.optimizer, batch, &self.cfg, lr, self.step)?,
            Method::Byol => train_step_byol(&mut self.bundle, &mut self.optimizer, batch, &self.cfg, lr, self.step)?,
        };
        self.step += 1;
        Ok((lr, rep))
    }

    /// Trains epoch `epoch` (1-based) and reports every step to `sink`.
    pub fn train_epoch(&mut self, epoch: usize, split: &Split, sink: &mut dyn FnMut(&StepRecord) -> Result<()>) -> Result<EpochLosses> {
        let batches = epoch_batches(self.cfg.seed, epoch, split.len(), self.cfg.batch_size);
        let mut acc = EpochLosses { l1: 0.0, l2: 0.0, total: 0.0 };
        for idx in &batches {
            let batch = self.make_batch(epoch, idx, &split.images)?;
            let (lr, rep) = self.train_step(&batch)?;
            let rec = StepRecord {
                step: self.step,
                epoch,
                lr,
                l1: rep.l1_contrastive,
                l2: rep.l2_regression,
                total: rep.total,
            };
            sink(&rec)?;
            acc.l1 += rep.l1_contrastive;
            acc.l2 += rep.l2_regression;
            acc.total += rep.total;
        }
        let n = batches.len().max(1) as f64;
        Ok(EpochLosses { l1: acc.l1 / n, l2: acc.l2 / n, total: acc.total / n })
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Continue from the last checkpoint in `out_dir` when it belongs to the same config.
    pub resume: bool,
    /// Stop (after checkpointing) once this epoch is done.
    pub stop_after_epoch: Option<usize>,
    /// Per-epoch progress lines on stderr.
    pub progress: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into(), resume: true, stop_after_epoch: None, progress: false }
    }
}

#[derive(Debug)]
pub struct RunOutcome<T> {
    pub series: CheckpointSeries,
    pub bundle: ModelBundle<T>,
    pub records: Vec<StepRecord>,
    /// Set when the run stopped early on request.
    pub stopped_at: Option<usize>,
}

fn is_checkpoint_epoch(cfg: &ExperimentConfig, epoch: usize) -> bool {
    epoch == 0 || epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs
}

/// Reads the metrics stream, keeping records up to `max_step`.
pub fn read_metrics(path: &Path, max_step: Option<usize>) -> Result<Vec<StepRecord>> {
    let f = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: StepRecord = serde_json::from_str(&line)?;
        if max_step.map_or(true, |m| r.step <= m) {
            out.push(r);
        }
    }
    Ok(out)
}

/// Full self-supervised training loop with checkpointing and resume.
pub fn run_training<T: Scalar>(cfg: &ExperimentConfig, dataset: &DatasetHandle, opts: &RunOptions) -> Result<RunOutcome<T>> {
    cfg.validate()?;
    fs::create_dir_all(opts.out_dir.join("checkpoints"))?;
    let series_path = opts.out_dir.join(SERIES_FILE);
    let metrics_path = opts.out_dir.join(METRICS_FILE);
    let n = dataset.train.len();

    let mut series = CheckpointSeries::default();
    let mut trainer: Option<Trainer<T>> = None;
    let mut start_epoch = 1;
    if opts.resume && series_path.exists() {
        let prev = CheckpointSeries::load(&series_path)?;
        if let Some(last) = prev.last() {
            let ck = load_checkpoint::<T>(&last.path)?;
            if &ck.header.config != cfg {
                return Err(Error::Config(format!(
                    "{} holds a run with a different configuration",
                    opts.out_dir.display()
                )));
            }
            start_epoch = ck.header.epoch + 1;
            trainer = Some(Trainer::assemble(
                cfg.clone(),
                ck.bundle,
                ck.optimizer,
                n,
                dataset.stats.clone(),
                ck.header.step,
            )?);
            series = prev;
        }
    }
    let mut records;
    let mut trainer = match trainer {
        Some(t) => {
            records = read_metrics(&metrics_path, Some(t.step))?;
            let mut f = fs::File::create(&metrics_path)?;
            for r in &records {
                writeln!(f, "{}", serde_json::to_string(r)?)?;
            }
            t
        }
        None => {
            records = Vec::new();
            fs::File::create(&metrics_path)?;
            let t = Trainer::<T>::new(cfg.clone(), n, dataset.stats.clone())?;
            let path = checkpoint_path(&opts.out_dir, 0);
            save_checkpoint(&path, cfg, 0, 0, None, &t.bundle, &t.optimizer)?;
            series.entries.push(CheckpointRecord { epoch: 0, path, losses: None });
            series.save(&series_path)?;
            t
        }
    };

    let mut metrics = fs::OpenOptions::new().append(true).open(&metrics_path)?;
    let mut stopped_at = None;
    for epoch in start_epoch..=cfg.epochs {
        let losses = trainer.train_epoch(epoch, &dataset.train, &mut |r| {
            writeln!(metrics, "{}", serde_json::to_string(r)?)?;
            records.push(*r);
            Ok(())
        })?;
        metrics.flush()?;
        if opts.progress {
            eprintln!(
                "epoch {epoch:>4}/{}  l1 {:.4}  l2 {:.4}  total {:.4}",
                cfg.epochs, losses.l1, losses.l2, losses.total
            );
        }
        if is_checkpoint_epoch(cfg, epoch) {
            let path = checkpoint_path(&opts.out_dir, epoch);
            save_checkpoint(&path, cfg, epoch, trainer.step, Some(losses), &trainer.bundle, &trainer.optimizer)?;
            series.entries.push(CheckpointRecord { epoch, path, losses: Some(losses) });
            series.save(&series_path)?;
        }
        if opts.stop_after_epoch == Some(epoch) && epoch < cfg.epochs {
            stopped_at = Some(epoch);
            break;
        }
    }
    Ok(RunOutcome { series, bundle: trainer.bundle, records, stopped_at })
}
