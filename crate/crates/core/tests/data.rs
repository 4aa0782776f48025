use std::fs;
use std::io::Write;
use std::path::Path;

use flate2::write::{GzEncoder, ZlibEncoder};
use flate2::Compression;

use geossl::data::*;
use geossl::image::Image;
use geossl::Error;

fn opts(root: &Path) -> LoadOptions {
    LoadOptions { root: Some(root.to_path_buf()), ..LoadOptions::default() }
}

#[test]
fn synthetic_sets_are_deterministic() {
    let a = load_dataset("synthetic-shapes", &LoadOptions::default()).unwrap();
    let b = load_dataset("synthetic-shapes", &LoadOptions::default()).unwrap();
    assert_eq!(a.split_sizes(), (500, 200));
    assert_eq!(a.train.images, b.train.images);
    assert_eq!(a.train.labels, b.train.labels);
    assert_eq!(a.test.images, b.test.images);
    assert_ne!(a.train.images[..10], a.test.images[..10]);
    assert_eq!(a.classes, 3);
    assert_eq!(a.resolution, (32, 32));
    assert!(a.train.labels.iter().chain(&a.test.labels).all(|&l| l < 3));
    let other = load_dataset("synthetic-shapes", &LoadOptions { seed: 8, ..LoadOptions::default() }).unwrap();
    assert_ne!(other.train.images, a.train.images);
}

#[test]
fn cache_matches_generator_and_survives_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cached = load_dataset("synthetic-arrows", &opts(dir.path())).unwrap();
    let fresh = load_dataset("synthetic-arrows", &LoadOptions::default()).unwrap();
    assert_eq!(cached.train.images, fresh.train.images);
    let path = cached.cache_path.clone().unwrap();
    assert!(path.join("manifest.json").exists());
    let again = load_dataset("synthetic-arrows", &opts(dir.path())).unwrap();
    assert_eq!(again.test.images, fresh.test.images);
    assert_eq!(again.test.labels, fresh.test.labels);
}

#[test]
fn corrupted_cache_fails_then_rebuilds() {
    let dir = tempfile::tempdir().unwrap();
    let first = load_dataset("synthetic-shapes", &opts(dir.path())).unwrap();
    let cache = first.cache_path.clone().unwrap();
    let blob = cache.join("train.images");
    let mut bytes = fs::read(&blob).unwrap();
    bytes[1234] ^= 0xff;
    fs::write(&blob, bytes).unwrap();
    match load_dataset("synthetic-shapes", &opts(dir.path())) {
        Err(Error::Integrity(_)) => {}
        other => panic!("expected integrity error, got {:?}", other.map(|h| h.name)),
    }
    let rebuilt = load_dataset("synthetic-shapes", &opts(dir.path())).unwrap();
    assert_eq!(rebuilt.train.images, first.train.images);
    assert_eq!(rebuilt.train.labels, first.train.labels);
}

#[test]
fn env_var_selects_the_root() {
    let dir = tempfile::tempdir().unwrap();
    // only this test touches the variable
    std::env::set_var(DATA_ENV, dir.path());
    let h = load_dataset("synthetic-arrows", &LoadOptions { train_size: Some(20), test_size: Some(10), ..Default::default() });
    std::env::remove_var(DATA_ENV);
    let h = h.unwrap();
    assert!(h.cache_path.unwrap().starts_with(dir.path()));
}

#[test]
fn shapes_are_balanced() {
    let s = synthetic_shapes(500, 7).unwrap();
    let c = s.class_counts(3);
    assert!(c.iter().all(|&n| (166..=167).contains(&n)), "{c:?}");
    assert!(synthetic_shapes(5, 7).is_err());
}

#[test]
fn arrows_differ_only_by_orientation() {
    let s = synthetic_arrows(40, 3).unwrap();
    for i in 0..40 {
        let base = arrow_base(3, i);
        if i % 2 == 1 {
            assert_eq!(s.labels[i], 1);
            assert_eq!(s.images[i], base.rotate_180());
        } else {
            assert_eq!(s.labels[i], 0);
            assert_eq!(s.images[i], base);
        }
    }
}

#[test]
fn pixel_space_nearest_centroid_beats_chance_on_shapes() {
    let train = synthetic_shapes(300, 1).unwrap();
    let test = synthetic_shapes(300, 2).unwrap();
    let px = |img: &Image<u8>| -> Vec<f64> { img.data().iter().map(|&v| v as f64 / 255.0).collect() };
    let mut centroids = vec![vec![0.0; 32 * 32 * 3]; 3];
    for (img, &l) in train.images.iter().zip(&train.labels) {
        for (c, v) in centroids[l].iter_mut().zip(px(img)) {
            *c += v / 100.0;
        }
    }
    let correct = test
        .images
        .iter()
        .zip(&test.labels)
        .filter(|(img, &l)| {
            let f = px(img);
            let d = |c: &Vec<f64>| c.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            (0..3).min_by(|&a, &b| d(&centroids[a]).total_cmp(&d(&centroids[b]))).unwrap() == l
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    eprintln!("pixel nearest-centroid accuracy {acc}");
    assert!(acc > 1.0 / 3.0, "{acc}");
}

#[test]
fn subsets_relabel_and_reject_degenerate_requests() {
    let h = load_dataset("synthetic-shapes", &LoadOptions::default()).unwrap();
    let s = h.subset_classes(&[2, 0]).unwrap();
    assert_eq!(s.classes, 2);
    assert_eq!(s.class_names, vec![h.class_names[2].clone(), h.class_names[0].clone()]);
    let n2 = h.train.labels.iter().filter(|&&l| l == 2).count();
    assert_eq!(s.train.labels.iter().filter(|&&l| l == 0).count(), n2);
    assert!(s.train.labels.iter().all(|&l| l < 2));
    let all = h.subset_classes(&[0, 1, 2]).unwrap();
    assert_eq!(all.train.images, h.train.images);
    assert_eq!(all.train.labels, h.train.labels);
    assert!(h.subset_classes(&[0]).is_err());
    assert!(h.subset_classes(&[0, 0]).is_err());
    assert!(h.subset_classes(&[0, 5]).is_err());
}

#[test]
fn dataset_names_parse() {
    assert!(load_dataset("mnist", &LoadOptions::default()).is_err());
    let spec: DatasetSpec = "svhn-6v9".parse().unwrap();
    assert_eq!(spec.kind, DatasetKind::Svhn);
    assert_eq!(spec.classes, Some(vec![6, 9]));
    assert_eq!(DatasetKind::Cifar10.num_classes(), 10);
    assert_eq!(DatasetKind::Cifar100.num_classes(), 100);
}

#[test]
fn missing_archive_without_download_is_a_fetch_error() {
    let dir = tempfile::tempdir().unwrap();
    match load_dataset("cifar10", &opts(dir.path())) {
        Err(Error::Fetch(_)) => {}
        other => panic!("{:?}", other.map(|h| h.name)),
    }
}

fn cifar_records(n: usize, label_bytes: usize, seed: u8) -> (Vec<u8>, Vec<(Image<u8>, usize)>) {
    let mut bytes = Vec::new();
    let mut expect = Vec::new();
    for i in 0..n {
        let label = (i * 7 + seed as usize) % 10;
        if label_bytes == 2 {
            bytes.push(99);
        }
        bytes.push(label as u8);
        let img = Image::from_fn(32, 32, 3, |y, x, c| ((y * 3 + x * 5 + c * 71 + i * 13 + seed as usize) % 256) as u8);
        for c in 0..3 {
            for y in 0..32 {
                for x in 0..32 {
                    bytes.push(img.at(y, x, c));
                }
            }
        }
        expect.push((img, label));
    }
    (bytes, expect)
}

fn tar_gz(path: &Path, files: &[(&str, &[u8])]) {
    let gz = GzEncoder::new(fs::File::create(path).unwrap(), Compression::fast());
    let mut tar = tar::Builder::new(gz);
    for (name, data) in files {
        let mut header = tar::Header::new_gnu();
        header.set_size(data.len() as u64);
        header.set_mode(0o644);
        header.set_cksum();
        tar.append_data(&mut header, name, *data).unwrap();
    }
    tar.into_inner().unwrap().finish().unwrap();
}

#[test]
fn cifar_archive_fixture_loads_through_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("cifar10").join("raw");
    fs::create_dir_all(&raw).unwrap();
    let (b2, e2) = cifar_records(3, 1, 2);
    let (b1, e1) = cifar_records(4, 1, 1);
    let (bt, et) = cifar_records(5, 1, 9);
    let archive = raw.join("cifar-10-binary.tar.gz");
    tar_gz(
        &archive,
        &[
            ("cifar-10-batches-bin/data_batch_2.bin", &b2),
            ("cifar-10-batches-bin/batches.meta.txt", b"airplane\n"),
            ("cifar-10-batches-bin/data_batch_1.bin", &b1),
            ("cifar-10-batches-bin/test_batch.bin", &bt),
        ],
    );
    let md5 = md5_file(&archive).unwrap();
    let source = ArchiveSource { file: "cifar-10-binary.tar.gz".into(), url: "http://invalid/".into(), md5 };
    let o = LoadOptions { sources: Some(vec![source.clone()]), ..opts(dir.path()) };
    let h = load_dataset("cifar10", &o).unwrap();
    let train: Vec<_> = e1.into_iter().chain(e2).collect();
    assert_eq!(h.train.len(), 7);
    for (i, (img, l)) in train.iter().enumerate() {
        assert_eq!(&h.train.images[i], img);
        assert_eq!(h.train.labels[i], *l);
    }
    assert_eq!(h.test.labels, et.iter().map(|e| e.1).collect::<Vec<_>>());
    assert!(h.cache_path.as_ref().unwrap().join("manifest.json").exists());

    // second load is served from the cache even without the archive
    fs::remove_file(&archive).unwrap();
    let again = load_dataset("cifar10", &o).unwrap();
    assert_eq!(again.train.images, h.train.images);

    // wrong checksum on a fresh root
    let dir2 = tempfile::tempdir().unwrap();
    let raw2 = dir2.path().join("cifar10").join("raw");
    fs::create_dir_all(&raw2).unwrap();
    tar_gz(&raw2.join("cifar-10-binary.tar.gz"), &[("x/test_batch.bin", &bt), ("x/data_batch_1.bin", &b1)]);
    let o2 = LoadOptions { sources: Some(vec![source]), ..opts(dir2.path()) };
    assert!(matches!(load_dataset("cifar10", &o2), Err(Error::Integrity(_))));
}

#[test]
fn cifar100_uses_fine_labels() {
    let (bytes, expect) = cifar_records(6, 2, 4);
    let s = parse_cifar_records(&bytes, CifarVariant::Hundred).unwrap();
    assert_eq!(s.labels, expect.iter().map(|e| e.1).collect::<Vec<_>>());
    assert!(parse_cifar_records(&bytes[..100], CifarVariant::Ten).is_err());
}

// Minimal level-5 MAT writer used as a fixture generator.
fn mat_element(ty: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&ty.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    while out.len() % 8 != 0 {
        out.push(0);
    }
    out
}

fn mat_matrix(name: &str, dims: &[i32], class: u8, data_ty: u32, data: &[u8]) -> Vec<u8> {
    let mut body = Vec::new();
    let flags = [class as u32, 0u32];
    body.extend(mat_element(6, &flags.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>()));
    body.extend(mat_element(5, &dims.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>()));
    if name.len() <= 4 {
        // small data element format
        let mut tag = Vec::new();
        tag.extend_from_slice(&(((name.len() as u32) << 16) | 1).to_le_bytes());
        let mut b = name.as_bytes().to_vec();
        b.resize(4, 0);
        tag.extend_from_slice(&b);
        body.extend(tag);
    } else {
        body.extend(mat_element(1, name.as_bytes()));
    }
    body.extend(mat_element(data_ty, data));
    mat_element(14, &body)
}

fn mat_file(elements: &[Vec<u8>], compress: bool) -> Vec<u8> {
    let mut out = vec![b' '; 116];
    out[..10].copy_from_slice(b"MATLAB 5.0");
    out.extend_from_slice(&[0u8; 8]);
    out.extend_from_slice(&0x0100u16.to_le_bytes());
    out.extend_from_slice(b"IM");
    for e in elements {
        if compress {
            let mut z = ZlibEncoder::new(Vec::new(), Compression::default());
            z.write_all(e).unwrap();
            let c = z.finish().unwrap();
            out.extend_from_slice(&15u32.to_le_bytes());
            out.extend_from_slice(&(c.len() as u32).to_le_bytes());
            out.extend_from_slice(&c);
        } else {
            out.extend_from_slice(e);
        }
    }
    out
}

fn svhn_fixture(n: usize, compress: bool) -> (Vec<u8>, Vec<Image<u8>>, Vec<usize>) {
    let imgs: Vec<Image<u8>> = (0..n)
        .map(|i| Image::from_fn(32, 32, 3, |y, x, c| ((y * 11 + x * 3 + c * 50 + i * 29) % 256) as u8))
        .collect();
    let mut x = vec![0u8; 32 * 32 * 3 * n];
    for (i, img) in imgs.iter().enumerate() {
        for c in 0..3 {
            for col in 0..32 {
                for row in 0..32 {
                    x[row + 32 * (col + 32 * (c + 3 * i))] = img.at(row, col, c);
                }
            }
        }
    }
    let raw_labels: Vec<f64> = (0..n).map(|i| (i % 10 + 1) as f64).collect();
    let y: Vec<u8> = raw_labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    let file = mat_file(
        &[
            mat_matrix("X", &[32, 32, 3, n as i32], 9, 2, &x),
            mat_matrix("y", &[n as i32, 1], 6, 9, &y),
        ],
        compress,
    );
    let labels = raw_labels.iter().map(|&l| if l == 10.0 { 0 } else { l as usize }).collect();
    (file, imgs, labels)
}

#[test]
fn svhn_mat_fixtures_parse() {
    for compress in [false, true] {
        let (bytes, imgs, labels) = svhn_fixture(12, compress);
        let s = split_from_mat(&bytes).unwrap();
        assert_eq!(s.images, imgs);
        assert_eq!(s.labels, labels);
        assert!(s.labels.contains(&0));
        let arrays = parse_mat(&bytes).unwrap();
        assert_eq!(arrays.iter().map(|a| a.name.as_str()).collect::<Vec<_>>(), vec!["X", "y"]);
    }
    let (bytes, _, _) = svhn_fixture(3, false);
    assert!(split_from_mat(&bytes[..bytes.len() - 50]).is_err());
    assert!(parse_mat(&bytes[..64]).is_err());
}

#[test]
fn svhn_subset_through_loader() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("svhn").join("raw");
    fs::create_dir_all(&raw).unwrap();
    let (train, _, tl) = svhn_fixture(30, true);
    let (test, _, _) = svhn_fixture(20, false);
    fs::write(raw.join("train_32x32.mat"), &train).unwrap();
    fs::write(raw.join("test_32x32.mat"), &test).unwrap();
    let sources = vec![
        ArchiveSource { file: "train_32x32.mat".into(), url: String::new(), md5: md5_file(&raw.join("train_32x32.mat")).unwrap() },
        ArchiveSource { file: "test_32x32.mat".into(), url: String::new(), md5: md5_file(&raw.join("test_32x32.mat")).unwrap() },
    ];
    let o = LoadOptions { sources: Some(sources), ..opts(dir.path()) };
    let h = load_dataset("svhn-6v9", &o).unwrap();
    assert_eq!(h.classes, 2);
    assert_eq!(h.class_names, vec!["6".to_string(), "9".to_string()]);
    let sixes = tl.iter().filter(|&&l| l == 6).count();
    assert_eq!(h.train.labels.iter().filter(|&&l| l == 0).count(), sixes);
    assert_eq!(h.train.len(), tl.iter().filter(|&&l| l == 6 || l == 9).count());
}

#[test]
fn cache_lock_is_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let lock = CacheLock::acquire(dir.path(), std::time::Duration::from_secs(1)).unwrap();
    assert!(CacheLock::acquire(dir.path(), std::time::Duration::from_millis(200)).is_err());
    drop(lock);
    CacheLock::acquire(dir.path(), std::time::Duration::from_millis(200)).unwrap();
}
