//! Binary checkpoint container.
//!
//! ```text
//! b"GEOSSLCK" | u32 version | u64 header length | JSON header | tensor payload | SHA-256
//! ```
//!
//! The header carries the config snapshot, epoch/step counters, the RNG
//! position, optimizer metadata and a directory of the little-endian
//! tensors in the payload. The trailing digest covers every preceding byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::nn::{Optimizer, OptimizerKind};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"GEOSSLCK";
pub const FORMAT_VERSION: u32 = 1;

/// Mean loss components over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

/// Position of the run's random streams. All draws are keyed by
/// `(seed, epoch, index)`, so the next epoch fully determines them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ExperimentConfig,
    pub dtype: String,
    pub epoch: usize,
    pub step: usize,
    pub rng: RngState,
    pub optimizer: OptimizerState,
    pub losses: Option<EpochLosses>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub header: CheckpointHeader,
    pub bundle: ModelBundle<T>,
    pub optimizer: Optimizer<T>,
}

const GROUP_PARAM: &str = "param";
const GROUP_FIRST: &str = "moment1";
const GROUP_SECOND: &str = "moment2";

#[allow(clippy::too_many_arguments)]
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    config: &ExperimentConfig,
    epoch: usize,
    step: usize,
    losses: Option<EpochLosses>,
    bundle: &ModelBundle<T>,
    optimizer: &Optimizer<T>,
) -> Result<()> {
    let mut payload = Vec::new();
    let mut tensors = Vec::new();
    let mut push = |name: &str, group: &str, shape: Vec<usize>, values: &[T]| {
        tensors.push(TensorEntry { name: name.into(), group: group.into(), shape, offset: payload.len() as u64 });
        for v in values {
            v.write_le(&mut payload);
        }
    };
    bundle.visit_all(&mut |p| push(&p.name, GROUP_PARAM, p.shape.clone(), &p.value));
    for (group, map) in [(GROUP_FIRST, &optimizer.first), (GROUP_SECOND, &optimizer.second)] {
        for (name, v) in map {
            push(name, group, vec![v.len()], v);
        }
    }
    let header = CheckpointHeader {
        config: config.clone(),
        dtype: T::DTYPE.into(),
        epoch,
        step,
        rng: RngState { seed: config.seed, next_epoch: epoch },
        optimizer: OptimizerState { kind: optimizer.config.kind, step: optimizer.step },
        losses,
        tensors,
    };
    let head = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + 12 + head.len() + payload.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &out)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn corrupt(path: &Path, what: &str) -> Error {
    Error::Checkpoint(format!("{}: {what}", path.display()))
}

/// Verifies the container and returns the header and payload.
fn open(path: &Path) -> Result<(CheckpointHeader, Vec<u8>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 + 12 + 32 || &bytes[..8] != MAGIC {
        return Err(corrupt(path, "not a checkpoint file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt(path, "checksum mismatch"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(corrupt(path, &format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let head = body.get(20..20 + hlen).ok_or_else(|| corrupt(path, "truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(head).map_err(|e| corrupt(path, &e.to_string()))?;
    Ok((header, body[20 + hlen..].to_vec()))
}

/// Reads and verifies only the header.
pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    open(path).map(|r| r.0)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let (header, payload) = open(path)?;
    if header.dtype != T::DTYPE {
        return Err(corrupt(path, &format!("stored as {}, requested {}", header.dtype, T::DTYPE)));
    }
    let read = |e: &TensorEntry| -> Result<Vec<T>> {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + n * T::BYTES;
        let raw = payload.get(start..end).ok_or_else(|| corrupt(path, &format!("tensor {} out of bounds", e.name)))?;
        Ok(raw.chunks(T::BYTES).map(T::read_le).collect())
    };
    let mut params: BTreeMap<&str, &TensorEntry> = BTreeMap::new();
    let mut optimizer = Optimizer::new(header.config.optimizer.clone());
    optimizer.step = header.optimizer.step;
    for e in &header.tensors {
        match e.group.as_str() {
            GROUP_PARAM => {
                params.insert(&e.name, e);
            }
            GROUP_FIRST => {
                optimizer.first.insert(e.name.clone(), read(e)?);
            }
            GROUP_SECOND => {
                optimizer.second.insert(e.name.clone(), read(e)?);
            }
            g => return Err(corrupt(path, &format!("unknown tensor group {g}"))),
        }
    }
    let mut bundle = ModelBundle::<T>::new(header.config.bundle_spec(), header.config.seed)?;
    let mut err = None;
    let mut seen = 0;
    bundle.visit_all_mut(&mut |p| {
        if err.is_some() {
            return;
        }
        match params.get(p.name.as_str()) {
            Some(e) if e.shape == p.shape => match read(e) {
                Ok(v) => {
                    p.value = v;
                    seen += 1;
                }
                Err(x) => err = Some(x),
            },
            Some(e) => err = Some(corrupt(path, &format!("{} has shape {:?}, model expects {:?}", p.name, e.shape, p.shape))),
            None => err = Some(corrupt(path, &format!("missing tensor {} (checkpoint/config mismatch)", p.name))),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if seen != params.len() {
        return Err(corrupt(path, "checkpoint holds tensors the model does not have"));
    }
    Ok(Checkpoint { header, bundle, optimizer })
}
