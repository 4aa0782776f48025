//! CIFAR binary-version archives (`cifar-10-binary.tar.gz`, `cifar-100-binary.tar.gz`).

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::Split;
use crate::error::{Error, Result};
use crate::image::Image;

const PIXELS: usize = 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarVariant {
    Ten,
    Hundred,
}

impl CifarVariant {
    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Ten => 1,
            CifarVariant::Hundred => 2,
        }
    }

    fn split_of(self, file: &str) -> Option<bool> {
        let base = file.rsplit('/').next().unwrap_or(file);
        match self {
            CifarVariant::Ten if base.starts_with("data_batch_") && base.ends_with(".bin") => Some(true),
            CifarVariant::Ten if base == "test_batch.bin" => Some(false),
            CifarVariant::Hundred if base == "train.bin" => Some(true),
            CifarVariant::Hundred if base == "test.bin" => Some(false),
            _ => None,
        }
    }
}

/// Decodes fixed-size records: label byte(s) then 3072 channel-planar pixels.
/// For CIFAR-100 the fine label (second byte) is used.
pub fn parse_records(bytes: &[u8], variant: CifarVariant) -> Result<Split> {
    let lb = variant.label_bytes();
    let rec = lb + 3 * PIXELS;
    if bytes.len() % rec != 0 {
        return Err(Error::Data(format!("CIFAR batch length {} is not a multiple of {rec}", bytes.len())));
    }
    let mut split = Split::default();
    for r in bytes.chunks(rec) {
        let label = r[lb - 1] as usize;
        let planes = &r[lb..];
        let img = Image::from_fn(32, 32, 3, |y, x, c| planes[c * PIXELS + y * 32 + x]);
        split.push(img, label);
    }
    Ok(split)
}

/// Reads train and test splits from the archive. Batch files are sorted by
/// name so the ordering is deterministic.
pub fn read_archive(path: &Path, variant: CifarVariant) -> Result<(Split, Split)> {
    let file = std::fs::File::open(path)?;
    let mut archive = tar::Archive::new(GzDecoder::new(file));
    let mut batches: Vec<(String, bool, Vec<u8>)> = Vec::new();
    for entry in archive.entries()? {
        let mut entry = entry?;
        let name = entry.path()?.to_string_lossy().into_owned();
        if let Some(train) = variant.split_of(&name) {
            let mut buf = Vec::new();
            entry.read_to_end(&mut buf)?;
            batches.push((name, train, buf));
        }
    }
    if !batches.iter().any(|b| b.1) || !batches.iter().any(|b| !b.1) {
        return Err(Error::Data(format!("{} does not contain CIFAR train and test batches", path.display())));
    }
    batches.sort_by(|a, b| a.0.cmp(&b.0));
    let (mut train, mut test) = (Split::default(), Split::default());
    for (_, is_train, buf) in batches {
        let part = parse_records(&buf, variant)?;
        if is_train { &mut train } else { &mut test }.extend(part);
    }
    Ok((train, test))
}
