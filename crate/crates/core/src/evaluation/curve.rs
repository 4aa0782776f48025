use serde::{Deserialize, Serialize};

use super::embed::embed_checkpoint;
use super::linear::{linear_eval, LinearEvalConfig};
use super::stats::aggregate_trials;
use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::training::CheckpointSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean: f64,
    /// Standard deviation over series; zero for one series.
    pub std: f64,
    pub accuracies: Vec<f64>,
}

/// Linear-probe accuracy at every checkpoint epoch shared by all series.
/// Each series is one seed of the same experiment.
pub fn learning_curve(
    series: &[CheckpointSeries],
    dataset: &DatasetHandle,
    cfg: &LinearEvalConfig,
) -> Result<Vec<CurvePoint>> {
    if series.is_empty() || series.iter().any(|s| s.is_empty()) {
        return Err(Error::Eval("learning curve needs a non-empty checkpoint series".into()));
    }
    let epochs: Vec<usize> = series[0]
        .entries
        .iter()
        .map(|e| e.epoch)
        .filter(|ep| series[1..].iter().all(|s| s.entries.iter().any(|e| e.epoch == *ep)))
        .collect();
    if epochs.is_empty() {
        return Err(Error::Eval("checkpoint series share no epochs".into()));
    }
    let mut points = Vec::with_capacity(epochs.len());
    for epoch in epochs {
        let mut accuracies = Vec::with_capacity(series.len());
        for s in series {
            let entry = s.entries.iter().find(|e| e.epoch == epoch).expect("shared epoch");
            let emb = embed_checkpoint(&entry.path, &dataset.train, &dataset.test, &dataset.stats, None)?;
            let rep = linear_eval(&emb.train.0, &emb.train.1, &emb.test.0, &emb.test.1, cfg, emb.config.seed)?;
            accuracies.push(rep.accuracy);
        }
        let summary = aggregate_trials(&accuracies, 0.99)?;
        points.push(CurvePoint { epoch, mean: summary.mean, std: summary.std, accuracies });
    }
    Ok(points)
}
