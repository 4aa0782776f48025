use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A downloadable archive with its published MD5.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveSource {
    pub file: String,
    pub url: String,
    pub md5: String,
}

impl ArchiveSource {
    fn new(file: &str, url: &str, md5: &str) -> Self {
        Self { file: file.into(), url: url.into(), md5: md5.into() }
    }
}

pub fn cifar10_sources() -> Vec<ArchiveSource> {
    vec![ArchiveSource::new(
        "cifar-10-binary.tar.gz",
        "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
        "c32a1d4ab5d03f1284b67883e8d87530",
    )]
}

pub fn cifar100_sources() -> Vec<ArchiveSource> {
    vec![ArchiveSource::new(
        "cifar-100-binary.tar.gz",
        "https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz",
        "03b5dce01913d631647c71ecec9e9cb8",
    )]
}

/// Train file first, then test.
pub fn svhn_sources() -> Vec<ArchiveSource> {
    vec![
        ArchiveSource::new(
            "train_32x32.mat",
            "http://ufldl.stanford.edu/housenumbers/train_32x32.mat",
            "e26dedcc434d2e4c54c9b2d4a06d8373",
        ),
        ArchiveSource::new(
            "test_32x32.mat",
            "http://ufldl.stanford.edu/housenumbers/test_32x32.mat",
            "eb5a983be6a315427106f1b164d9cef3",
        ),
    ]
}

pub fn md5_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Md5::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn verify(path: &Path, md5: &str) -> Result<()> {
    let got = md5_file(path)?;
    if !got.eq_ignore_ascii_case(md5) {
        return Err(Error::Integrity(format!("{}: md5 {got}, expected {md5}", path.display())));
    }
    Ok(())
}

/// Returns the verified local path of `src` inside `dir`, downloading it
/// first when allowed.
pub fn ensure_archive(src: &ArchiveSource, dir: &Path, download: bool) -> Result<PathBuf> {
    let path = dir.join(&src.file);
    if path.exists() {
        verify(&path, &src.md5)?;
        return Ok(path);
    }
    if !download {
        return Err(Error::Fetch(format!(
            "{} not found and downloading is disabled (expected from {})",
            path.display(),
            src.url
        )));
    }
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("part");
    let resp = ureq::get(&src.url).call().map_err(|e| Error::Fetch(format!("{}: {e}", src.url)))?;
    {
        let mut out = fs::File::create(&tmp)?;
        std::io::copy(&mut resp.into_reader(), &mut out).map_err(|e| Error::Fetch(format!("{}: {e}", src.url)))?;
    }
    if let Err(e) = verify(&tmp, &src.md5) {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}
