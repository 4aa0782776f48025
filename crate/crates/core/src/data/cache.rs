//! On-disk tensor cache.
//!
//! Layout of a cache directory:
//!
//! ```text
//! manifest.json      dataset metadata plus the SHA-256 of every blob
//! train.images       u8, NHWC, row-major
//! train.labels       u16 little-endian
//! test.images
//! test.labels
//! .lock              present while a process is building the cache
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Split;
use crate::error::{Error, Result};
use crate::image::Image;

pub const CACHE_VERSION: u32 = 1;
const SPLITS: [&str; 2] = ["train", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub count: usize,
    pub images: BlobEntry,
    pub labels: BlobEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub version: u32,
    pub dataset: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub train: SplitEntry,
    pub test: SplitEntry,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_blob(dir: &Path, file: &str, bytes: &[u8]) -> Result<BlobEntry> {
    write_atomic(&dir.join(file), bytes)?;
    Ok(BlobEntry { file: file.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 })
}

/// Writes both splits and then the manifest, each via rename.
pub fn write_cache(dir: &Path, dataset: &str, train: &Split, test: &Split) -> Result<CacheManifest> {
    fs::create_dir_all(dir)?;
    let (h, w, c) = train.images.first().map(|i| i.dims()).unwrap_or((32, 32, 3));
    let mut entries = Vec::new();
    for (name, split) in SPLITS.iter().zip([train, test]) {
        let mut img = Vec::with_capacity(split.len() * h * w * c);
        for i in &split.images {
            if i.dims() != (h, w, c) {
                return Err(Error::Data(format!("mixed image sizes in {dataset}/{name}")));
            }
            img.extend_from_slice(i.data());
        }
        let lab: Vec<u8> = split.labels.iter().flat_map(|&l| (l as u16).to_le_bytes()).collect();
        entries.push(SplitEntry {
            count: split.len(),
            images: write_blob(dir, &format!("{name}.images"), &img)?,
            labels: write_blob(dir, &format!("{name}.labels"), &lab)?,
        });
    }
    let test_entry = entries.pop().expect("two splits");
    let train_entry = entries.pop().expect("two splits");
    let manifest = CacheManifest {
        version: CACHE_VERSION,
        dataset: dataset.to_string(),
        height: h,
        width: w,
        channels: c,
        train: train_entry,
        test: test_entry,
    };
    write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Removes the manifest and blobs so the next load rebuilds them.
pub fn invalidate(dir: &Path) -> Result<()> {
    for f in ["manifest.json"].into_iter().map(String::from).chain(
        SPLITS.iter().flat_map(|s| [format!("{s}.images"), format!("{s}.labels")]),
    ) {
        match fs::remove_file(dir.join(f)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
            _ => {}
        }
    }
    Ok(())
}

fn read_split(dir: &Path, m: &CacheManifest, e: &SplitEntry) -> Result<Split> {
    let read = |b: &BlobEntry| -> Result<Vec<u8>> {
        let bytes = fs::read(dir.join(&b.file))?;
        if sha256_hex(&bytes) != b.sha256 {
            return Err(Error::Integrity(format!("{} does not match its recorded hash", dir.join(&b.file).display())));
        }
        Ok(bytes)
    };
    let img = read(&e.images)?;
    let lab = read(&e.labels)?;
    let px = m.height * m.width * m.channels;
    if img.len() != e.count * px || lab.len() != e.count * 2 {
        return Err(Error::Integrity(format!("{} blob sizes disagree with manifest", e.images.file)));
    }
    let images = img.chunks(px).map(|c| Image::from_vec(m.height, m.width, m.channels, c.to_vec())).collect();
    let labels = lab.chunks(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as usize).collect();
    Ok(Split { images, labels })
}

/// Loads a cache. Returns `Ok(None)` when there is none. Any hash
/// mismatch invalidates the cache and yields an integrity error.
pub fn read_cache(dir: &Path) -> Result<Option<(Split, Split)>> {
    let path = dir.join("manifest.json");
    let raw = match fs::read(&path) {
        Ok(r) => r,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let result = serde_json::from_slice::<CacheManifest>(&raw)
        .map_err(|e| Error::Integrity(format!("unreadable cache manifest: {e}")))
        .and_then(|m| {
            if m.version != CACHE_VERSION {
                return Err(Error::Integrity(format!("cache version {} != {CACHE_VERSION}", m.version)));
            }
            Ok((read_split(dir, &m, &m.train)?, read_split(dir, &m, &m.test)?))
        });
    match result {
        Ok(s) => Ok(Some(s)),
        Err(e @ Error::Integrity(_)) => {
            invalidate(dir)?;
            Err(e)
        }
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {
            invalidate(dir)?;
            Err(Error::Integrity(format!("cache blob missing: {e}")))
        }
        Err(e) => Err(e),
    }
}

/// Exclusive lock on a cache directory, released on drop.
#[derive(Debug)]
pub struct CacheLock {
    path: PathBuf,
}

impl CacheLock {
    pub fn acquire(dir: &Path, timeout: Duration) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        let start = Instant::now();
        loop {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(Self { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if start.elapsed() > timeout {
                        return Err(Error::Data(format!("timed out waiting for {}", path.display())));
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl Drop for CacheLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
