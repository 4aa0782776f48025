use std::path::Path;

use ndarray::{concatenate, Array2, Axis};

use crate::data::{ChannelStats, Split};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{batch_tensor, ModelBundle};
use crate::scalar::Scalar;
use crate::training::{load_checkpoint, read_header, ExperimentConfig};

const EMBED_BATCH: usize = 256;

/// Encoder outputs for every image of `split`, in order, with the encoder in
/// evaluation mode. No augmentation is applied.
pub fn extract_embeddings<T: Scalar>(
    bundle: &ModelBundle<T>,
    split: &Split,
    stats: &ChannelStats,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if split.is_empty() {
        return Err(Error::Data("cannot embed an empty split".into()));
    }
    let mut parts = Vec::new();
    for chunk in split.images.chunks(EMBED_BATCH) {
        let imgs: Vec<Image<T>> = chunk.iter().map(Image::from_u8).collect();
        let refs: Vec<&Image<T>> = imgs.iter().collect();
        let z = bundle.encode(&batch_tensor(&refs, &stats.mean, &stats.std)?)?;
        parts.push(z.mapv(|v| v.as_f64()));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let x = concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((x, split.labels.clone()))
}

/// Frozen-encoder embeddings of both splits from a checkpoint file.
#[derive(Debug, Clone)]
pub struct CheckpointEmbeddings {
    pub config: ExperimentConfig,
    pub epoch: usize,
    pub train: (Array2<f64>, Vec<usize>),
    pub test: (Array2<f64>, Vec<usize>),
}

fn embed_with<T: Scalar>(
    path: &Path,
    train: &Split,
    test: &Split,
    stats: &ChannelStats,
) -> Result<CheckpointEmbeddings> {
    let ck = load_checkpoint::<T>(path)?;
    Ok(CheckpointEmbeddings {
        train: extract_embeddings(&ck.bundle, train, stats)?,
        test: extract_embeddings(&ck.bundle, test, stats)?,
        config: ck.header.config,
        epoch: ck.header.epoch,
    })
}

/// Loads a checkpoint in its stored precision and embeds both splits.
/// When `expected` is given, the checkpoint must have been written by a run
/// with that configuration.
pub fn embed_checkpoint(
    path: &Path,
    train: &Split,
    test: &Split,
    stats: &ChannelStats,
    expected: Option<&ExperimentConfig>,
) -> Result<CheckpointEmbeddings> {
    let header = read_header(path)?;
    if let Some(cfg) = expected {
        if &header.config != cfg {
            return Err(Error::Checkpoint(format!(
                "{} was written by a different configuration",
                path.display()
            )));
        }
    }
    match header.dtype.as_str() {
        "f32" => embed_with::<f32>(path, train, test, stats),
        "f64" => embed_with::<f64>(path, train, test, stats),
        other => Err(Error::Checkpoint(format!("unsupported dtype `{other}`"))),
    }
}
