//! Datasets: CIFAR-10/100, SVHN and procedural sets, behind one handle type.

mod cache;
mod cifar;
mod fetch;
mod svhn;
mod synthetic;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::{invalidate, read_cache, write_cache, BlobEntry, CacheLock, CacheManifest, SplitEntry, CACHE_VERSION};
pub use cifar::{parse_records as parse_cifar_records, read_archive as read_cifar_archive, CifarVariant};
pub use fetch::{cifar100_sources, cifar10_sources, ensure_archive, md5_file, svhn_sources, ArchiveSource};
pub use svhn::{parse_mat, split_from_mat, MatArray};
pub use synthetic::{
    arrow_base, arrow_image, natural_like_image, shape_image, synthetic_arrows, synthetic_shapes, ARROW_NAMES,
    SHAPE_NAMES,
};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{derive_seed, Stream};

/// Environment variable naming the dataset root.
pub const DATA_ENV: &str = "GEOSSL_DATA";

/// Images (8-bit, HWC) with their labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub images: Vec<Image<u8>>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn push(&mut self, image: Image<u8>, label: usize) {
        self.images.push(image);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.images.truncate(n);
        self.labels.truncate(n);
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut c = vec![0; classes];
        for &l in &self.labels {
            if l < classes {
                c[l] += 1;
            }
        }
        c
    }
}

impl FromIterator<(Image<u8>, usize)> for Split {
    fn from_iter<I: IntoIterator<Item = (Image<u8>, usize)>>(iter: I) -> Self {
        let mut s = Split::default();
        for (i, l) in iter {
            s.push(i, l);
        }
        s
    }
}

impl Extend<(Image<u8>, usize)> for Split {
    fn extend<I: IntoIterator<Item = (Image<u8>, usize)>>(&mut self, iter: I) {
        for (i, l) in iter {
            self.push(i, l);
        }
    }
}

impl IntoIterator for Split {
    type Item = (Image<u8>, usize);
    type IntoIter = std::iter::Zip<std::vec::IntoIter<Image<u8>>, std::vec::IntoIter<usize>>;

    fn into_iter(self) -> Self::IntoIter {
        self.images.into_iter().zip(self.labels)
    }
}

/// Fixed per-dataset channel statistics used to standardize inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn new(mean: [f64; 3], std: [f64; 3]) -> Self {
        Self { mean: mean.to_vec(), std: std.to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    Svhn,
    SyntheticShapes,
    SyntheticArrows,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Cifar100 => "cifar100",
            DatasetKind::Svhn => "svhn",
            DatasetKind::SyntheticShapes => "synthetic-shapes",
            DatasetKind::SyntheticArrows => "synthetic-arrows",
        }
    }

    pub fn is_synthetic(self) -> bool {
        matches!(self, DatasetKind::SyntheticShapes | DatasetKind::SyntheticArrows)
    }

    pub fn num_classes(self) -> usize {
        match self {
            DatasetKind::Cifar10 | DatasetKind::Svhn => 10,
            DatasetKind::Cifar100 => 100,
            DatasetKind::SyntheticShapes => 3,
            DatasetKind::SyntheticArrows => 2,
        }
    }

    pub fn stats(self) -> ChannelStats {
        match self {
            DatasetKind::Cifar10 => ChannelStats::new([0.4914, 0.4822, 0.4465], [0.2470, 0.2435, 0.2616]),
            DatasetKind::Cifar100 => ChannelStats::new([0.5071, 0.4865, 0.4409], [0.2673, 0.2564, 0.2762]),
            DatasetKind::Svhn => ChannelStats::new([0.4377, 0.4438, 0.4728], [0.1980, 0.2010, 0.1970]),
            DatasetKind::SyntheticShapes | DatasetKind::SyntheticArrows => {
                ChannelStats::new([0.5, 0.5, 0.5], [0.25, 0.25, 0.25])
            }
        }
    }

    pub fn sources(self) -> Vec<ArchiveSource> {
        match self {
            DatasetKind::Cifar10 => cifar10_sources(),
            DatasetKind::Cifar100 => cifar100_sources(),
            DatasetKind::Svhn => svhn_sources(),
            _ => Vec::new(),
        }
    }

    fn class_names(self) -> Vec<String> {
        match self {
            DatasetKind::SyntheticShapes => SHAPE_NAMES.iter().map(|s| s.to_string()).collect(),
            DatasetKind::SyntheticArrows => ARROW_NAMES.iter().map(|s| s.to_string()).collect(),
            k => (0..k.num_classes()).map(|i| i.to_string()).collect(),
        }
    }
}

/// A dataset name, optionally with a class subset (`svhn-6v9`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub classes: Option<Vec<usize>>,
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "cifar10" => DatasetKind::Cifar10,
            "cifar100" => DatasetKind::Cifar100,
            "svhn" => DatasetKind::Svhn,
            "svhn-6v9" => return Ok(Self { kind: DatasetKind::Svhn, classes: Some(vec![6, 9]) }),
            "synthetic-shapes" => DatasetKind::SyntheticShapes,
            "synthetic-arrows" => DatasetKind::SyntheticArrows,
            other => {
                return Err(Error::Config(format!(
                    "unknown dataset `{other}` (expected cifar10, cifar100, svhn, svhn-6v9, synthetic-shapes, synthetic-arrows)"
                )))
            }
        };
        Ok(Self { kind, classes: None })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    /// Dataset root; falls back to `$GEOSSL_DATA`, then `./data`. Synthetic
    /// sets are only cached when a root is given explicitly or via the
    /// environment.
    pub root: Option<PathBuf>,
    pub download: bool,
    /// Keep only the first `n` training / test samples.
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    /// Seed of procedural datasets.
    pub seed: u64,
    /// Overrides the built-in archive list (file names, URLs, checksums).
    pub sources: Option<Vec<ArchiveSource>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { root: None, download: false, train_size: None, test_size: None, seed: 7, sources: None }
    }
}

pub const DEFAULT_SYNTHETIC_TRAIN: usize = 500;
pub const DEFAULT_SYNTHETIC_TEST: usize = 200;

#[derive(Debug, Clone)]
pub struct DatasetHandle {
    pub name: String,
    pub kind: DatasetKind,
    pub classes: usize,
    pub class_names: Vec<String>,
    pub train: Split,
    pub test: Split,
    pub resolution: (usize, usize),
    pub stats: ChannelStats,
    pub cache_path: Option<PathBuf>,
}

impl DatasetHandle {
    pub fn split_sizes(&self) -> (usize, usize) {
        (self.train.len(), self.test.len())
    }

    /// Keeps the listed classes and relabels them to `0..classes.len()` in
    /// the order given.
    pub fn subset_classes(&self, classes: &[usize]) -> Result<DatasetHandle> {
        if classes.len() < 2 {
            return Err(Error::Data(format!("class subset {classes:?} needs at least two classes")));
        }
        for (i, c) in classes.iter().enumerate() {
            if *c >= self.classes {
                return Err(Error::Data(format!("class {c} not in 0..{}", self.classes)));
            }
            if classes[..i].contains(c) {
                return Err(Error::Data(format!("class {c} listed twice")));
            }
        }
        let filter = |s: &Split| -> Split {
            s.images
                .iter()
                .zip(&s.labels)
                .filter_map(|(img, l)| classes.iter().position(|c| c == l).map(|p| (img.clone(), p)))
                .collect()
        };
        let (train, test) = (filter(&self.train), filter(&self.test));
        if train.is_empty() || test.is_empty() {
            return Err(Error::Data(format!("class subset {classes:?} leaves an empty split")));
        }
        let tag = classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("v");
        Ok(DatasetHandle {
            name: format!("{}-{tag}", self.name),
            kind: self.kind,
            classes: classes.len(),
            class_names: classes.iter().map(|&c| self.class_names[c].clone()).collect(),
            train,
            test,
            resolution: self.resolution,
            stats: self.stats.clone(),
            cache_path: self.cache_path.clone(),
        })
    }
}

const LOCK_TIMEOUT: Duration = Duration::from_secs(600);

fn resolve_root(opts: &LoadOptions) -> Option<PathBuf> {
    opts.root.clone().or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
}

fn with_cache(dir: &Path, name: &str, build: impl FnOnce() -> Result<(Split, Split)>) -> Result<(Split, Split)> {
    let _lock = CacheLock::acquire(dir, LOCK_TIMEOUT)?;
    if let Some(s) = read_cache(dir)? {
        return Ok(s);
    }
    let (train, test) = build()?;
    write_cache(dir, name, &train, &test)?;
    Ok((train, test))
}

fn build_synthetic(kind: DatasetKind, n_train: usize, n_test: usize, seed: u64) -> Result<(Split, Split)> {
    let test_seed = derive_seed(seed, Stream::Synthetic, &[0x7e57]);
    let gen = match kind {
        DatasetKind::SyntheticShapes => synthetic_shapes,
        _ => synthetic_arrows,
    };
    Ok((gen(n_train, seed)?, gen(n_test, test_seed)?))
}

fn build_benchmark(kind: DatasetKind, raw: &Path, opts: &LoadOptions) -> Result<(Split, Split)> {
    let sources = opts.sources.clone().unwrap_or_else(|| kind.sources());
    let paths = sources.iter().map(|s| ensure_archive(s, raw, opts.download)).collect::<Result<Vec<_>>>()?;
    match kind {
        DatasetKind::Cifar10 => read_cifar_archive(&paths[0], CifarVariant::Ten),
        DatasetKind::Cifar100 => read_cifar_archive(&paths[0], CifarVariant::Hundred),
        DatasetKind::Svhn => {
            if paths.len() != 2 {
                return Err(Error::Config("svhn needs a train and a test file".into()));
            }
            Ok((split_from_mat(&std::fs::read(&paths[0])?)?, split_from_mat(&std::fs::read(&paths[1])?)?))
        }
        _ => unreachable!("synthetic datasets are generated"),
    }
}

/// Loads (and caches) a dataset. Ordering is deterministic.
pub fn load_dataset(name: &str, opts: &LoadOptions) -> Result<DatasetHandle> {
    let spec: DatasetSpec = name.parse()?;
    let kind = spec.kind;
    let root = resolve_root(opts);
    let (train, test, cache_path) = if kind.is_synthetic() {
        let n_train = opts.train_size.unwrap_or(DEFAULT_SYNTHETIC_TRAIN);
        let n_test = opts.test_size.unwrap_or(DEFAULT_SYNTHETIC_TEST);
        match root {
            Some(root) => {
                let dir = root.join(format!("{}-n{n_train}-t{n_test}-s{}", kind.name(), opts.seed));
                let (a, b) = with_cache(&dir, kind.name(), || build_synthetic(kind, n_train, n_test, opts.seed))?;
                (a, b, Some(dir))
            }
            None => {
                let (a, b) = build_synthetic(kind, n_train, n_test, opts.seed)?;
                (a, b, None)
            }
        }
    } else {
        let root = root.unwrap_or_else(|| PathBuf::from("data"));
        let base = root.join(kind.name());
        let dir = base.join("cache");
        let raw = base.join("raw");
        let (mut a, mut b) = with_cache(&dir, kind.name(), || build_benchmark(kind, &raw, opts))?;
        if let Some(n) = opts.train_size {
            a.truncate(n);
        }
        if let Some(n) = opts.test_size {
            b.truncate(n);
        }
        (a, b, Some(dir))
    };
    let handle = DatasetHandle {
        name: kind.name().to_string(),
        kind,
        classes: kind.num_classes(),
        class_names: kind.class_names(),
        resolution: train.images.first().map(|i| (i.height(), i.width())).unwrap_or((32, 32)),
        train,
        test,
        stats: kind.stats(),
        cache_path,
    };
    match &spec.classes {
        Some(c) => handle.subset_classes(c),
        None => Ok(handle),
    }
}

/// Downloads (if needed) and verifies the archives of a benchmark dataset.
pub fn fetch_dataset(name: &str, root: Option<&Path>) -> Result<Vec<PathBuf>> {
    let spec: DatasetSpec = name.parse()?;
    let root = root.map(Path::to_path_buf).or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from));
    let root = root.unwrap_or_else(|| PathBuf::from("data"));
    let raw = root.join(spec.kind.name()).join("raw");
    spec.kind.sources().iter().map(|s| ensure_archive(s, &raw, true)).collect()
}
