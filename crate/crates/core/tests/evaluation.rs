use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use geossl::data::{load_dataset, LoadOptions};
use geossl::evaluation::*;
use geossl::model::ModelBundle;
use geossl::nn::EncoderSpec;
use geossl::training::{
    run_training, save_checkpoint, CheckpointRecord, CheckpointSeries, ExperimentConfig, Method, ModuleKind,
    RunOptions,
};
use geossl::Error;

fn blobs(n_per: usize, dim: usize, centres: &[f64], spread: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread).unwrap();
    let mut x = Array2::zeros((n_per * centres.len(), dim));
    let mut y = Vec::new();
    for (c, &m) in centres.iter().enumerate() {
        for i in 0..n_per {
            let r = c * n_per + i;
            for j in 0..dim {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                x[[r, j]] = sign * m + noise.sample(&mut rng);
            }
            y.push(c);
        }
    }
    (x, y)
}

fn quick() -> LinearEvalConfig {
    LinearEvalConfig { epochs: 30, ..LinearEvalConfig::desk() }
}

#[test]
fn separable_blobs_are_classified() {
    let (xtr, ytr) = blobs(100, 8, &[-1.0, 1.0], 0.3, 1);
    let (xte, yte) = blobs(100, 8, &[-1.0, 1.0], 0.3, 2);
    let r = linear_eval(&xtr, &ytr, &xte, &yte, &quick(), 0).unwrap();
    assert!(r.accuracy >= 0.99, "{}", r.accuracy);
}

#[test]
fn shuffled_labels_give_chance() {
    let c = 4;
    let (xtr, mut ytr) = blobs(100, 8, &[-1.5, -0.5, 0.5, 1.5], 0.3, 3);
    let (xte, mut yte) = blobs(100, 8, &[-1.5, -0.5, 0.5, 1.5], 0.3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    ytr.shuffle(&mut rng);
    yte.shuffle(&mut rng);
    let r = linear_eval(&xtr, &ytr, &xte, &yte, &quick(), 0).unwrap();
    let p = 1.0 / c as f64;
    let sigma = (p * (1.0 - p) / yte.len() as f64).sqrt();
    assert!((r.accuracy - p).abs() <= 3.0 * sigma, "{}", r.accuracy);
}

#[test]
fn duplicated_columns_do_not_change_accuracy() {
    let centres = [-0.3, 0.0, 0.3];
    let mut base = Vec::new();
    let mut dup = Vec::new();
    for seed in 0..5 {
        let (xtr, ytr) = blobs(60, 6, &centres, 0.5, 10 + seed);
        let (xte, yte) = blobs(60, 6, &centres, 0.5, 20 + seed);
        let widen = |x: &Array2<f64>| concatenate(Axis(1), &[x.view(), x.view()]).unwrap();
        base.push(linear_eval(&xtr, &ytr, &xte, &yte, &quick(), seed).unwrap().accuracy);
        dup.push(linear_eval(&widen(&xtr), &ytr, &widen(&xte), &yte, &quick(), seed).unwrap().accuracy);
    }
    let a = aggregate_trials(&base, 0.99).unwrap();
    let b = aggregate_trials(&dup, 0.99).unwrap();
    let noise = (a.std.powi(2) + b.std.powi(2)).sqrt().max(1.0 / 180.0);
    assert!((a.mean - b.mean).abs() <= 3.0 * noise, "{} vs {}", a.mean, b.mean);
}

#[test]
fn degenerate_inputs_are_rejected() {
    let (x, _) = blobs(10, 4, &[0.0, 1.0], 0.1, 5);
    let one = vec![0usize; 20];
    assert!(matches!(linear_eval(&x, &one, &x, &one, &quick(), 0), Err(Error::Eval(_))));
    let y: Vec<usize> = (0..20).map(|i| i % 2).collect();
    assert!(linear_eval(&x, &y[..10], &x, &y, &quick(), 0).is_err());
    let narrow = x.slice(ndarray::s![.., ..2]).to_owned();
    assert!(linear_eval(&x, &y, &narrow, &y, &quick(), 0).is_err());
}

#[test]
fn confusion_matrix_is_consistent() {
    let (xtr, ytr) = blobs(40, 5, &[-0.4, 0.0, 0.4], 0.4, 6);
    let (xte, yte) = blobs(30, 5, &[-0.4, 0.0, 0.4], 0.4, 7);
    let r = linear_eval(&xtr, &ytr, &xte, &yte, &quick(), 0).unwrap();
    assert_eq!(r.n_test, 90);
    for (c, row) in r.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), yte.iter().filter(|&&l| l == c).count());
        assert_eq!(r.per_class[c], Some(row[c] as f64 / 30.0));
    }
    let trace: usize = (0..3).map(|c| r.confusion[c][c]).sum();
    assert_eq!(r.accuracy, trace as f64 / 90.0);
    let csv = r.confusion_csv(&["a".into(), "b".into(), "c".into()]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "true\\pred,a,b,c");
    assert!(lines[1].starts_with("a,"));
    let back: usize = lines[1..]
        .iter()
        .flat_map(|l| l.split(',').skip(1).map(|v| v.parse::<usize>().unwrap()))
        .sum();
    assert_eq!(back, 90);
}

#[test]
fn missing_test_class_has_no_per_class_accuracy() {
    let r = EvalReport::from_predictions(&[0, 0, 1], &[0, 1, 1], 3, quick());
    assert_eq!(r.per_class, vec![Some(0.5), Some(1.0), None]);
    assert_eq!(r.accuracy, 2.0 / 3.0);
}

#[test]
fn probe_training_is_deterministic() {
    let (xtr, ytr) = blobs(30, 4, &[-0.2, 0.2], 0.5, 8);
    let a = linear_eval(&xtr, &ytr, &xtr, &ytr, &quick(), 3).unwrap();
    let b = linear_eval(&xtr, &ytr, &xtr, &ytr, &quick(), 3).unwrap();
    assert_eq!(a, b);
}

// Two-sided t critical values in closed form for df = 1 and df = 2.
fn t_df1(conf: f64) -> f64 {
    (std::f64::consts::PI * conf / 2.0).tan()
}

fn t_df2(conf: f64) -> f64 {
    let p = 0.5 + conf / 2.0;
    (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt()
}

#[test]
fn aggregate_matches_closed_form_quantiles() {
    let s = aggregate_trials(&[0.0, 1.0], 0.99).unwrap();
    assert_eq!(s.mean, 0.5);
    let sd = 0.5f64.sqrt();
    let expect = t_df1(0.99) * sd / 2f64.sqrt();
    assert!((s.half_width.unwrap() - expect).abs() < 1e-6 * expect, "{:?} vs {expect}", s.half_width);
    assert!((expect - 31.828_4).abs() < 1e-3);

    let v = [0.61, 0.64, 0.70];
    let s = aggregate_trials(&v, 0.95).unwrap();
    let m = v.iter().sum::<f64>() / 3.0;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 2.0).sqrt();
    let expect = t_df2(0.95) * sd / 3f64.sqrt();
    assert!((s.half_width.unwrap() - expect).abs() < 1e-6 * expect);
    assert!((s.mean_percent() - 100.0 * m).abs() < 1e-9);
    assert!((s.half_width_percent().unwrap() - 100.0 * expect).abs() < 1e-6);
}

#[test]
fn aggregate_edge_cases() {
    assert!(matches!(aggregate_trials(&[], 0.99), Err(Error::Eval(_))));
    let same = aggregate_trials(&[0.7; 5], 0.99).unwrap();
    assert_eq!(same.half_width, Some(0.0));
    assert_eq!(same.std, 0.0);
    let single = aggregate_trials(&[0.4], 0.99).unwrap();
    assert_eq!(single.half_width, None);
    assert!(single.display_percent().contains('—'));
    assert!(aggregate_trials(&[0.1, 0.2], 1.0).is_err());

    let v = [0.5, 0.62, 0.58, 0.71, 0.66];
    let h95 = aggregate_trials(&v, 0.95).unwrap().half_width.unwrap();
    let h99 = aggregate_trials(&v, 0.99).unwrap().half_width.unwrap();
    assert!(h95 < h99);
    let mut r = v;
    r.reverse();
    assert_eq!(aggregate_trials(&r, 0.99).unwrap(), aggregate_trials(&v, 0.99).unwrap());
}

fn small_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(Method::Simclr, ModuleKind::Affine);
    cfg.model.encoder = EncoderSpec::SmallCnn { channels: vec![8, 16] };
    cfg.model.projector_hidden = 16;
    cfg.model.projection_dim = 8;
    cfg.model.regressor_hidden = 16;
    cfg.batch_size = 16;
    cfg.epochs = 2;
    cfg.warmup_epochs = 0;
    cfg.checkpoint_every = 1;
    cfg
}

#[test]
fn embeddings_are_deterministic_and_frozen() {
    let ds = load_dataset("synthetic-shapes", &LoadOptions { train_size: Some(30), test_size: Some(12), ..Default::default() })
        .unwrap();
    let cfg = small_cfg();
    let bundle = ModelBundle::<f32>::new(cfg.bundle_spec(), 1).unwrap();
    let before = bundle.param_hash();
    let (a, la) = extract_embeddings(&bundle, &ds.train, &ds.stats).unwrap();
    let (b, _) = extract_embeddings(&bundle, &ds.train, &ds.stats).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.nrows(), 30);
    assert_eq!(a.ncols(), bundle.latent_dim());
    assert_eq!(la, ds.train.labels);
    let (t, lt) = extract_embeddings(&bundle, &ds.test, &ds.stats).unwrap();
    linear_eval(&a, &la, &t, &lt, &quick(), 0).unwrap();
    assert_eq!(bundle.param_hash(), before);
}

#[test]
fn random_encoder_beats_chance_on_shapes() {
    let ds = load_dataset("synthetic-shapes", &LoadOptions::default()).unwrap();
    let cfg = ExperimentConfig::desk(Method::Simclr, ModuleKind::None);
    let bundle = ModelBundle::<f32>::new(cfg.bundle_spec(), cfg.seed).unwrap();
    let (xtr, ytr) = extract_embeddings(&bundle, &ds.train, &ds.stats).unwrap();
    let (xte, yte) = extract_embeddings(&bundle, &ds.test, &ds.stats).unwrap();
    let r = linear_eval(&xtr, &ytr, &xte, &yte, &LinearEvalConfig::desk(), cfg.seed).unwrap();
    assert!(r.accuracy > 1.0 / 3.0, "{}", r.accuracy);
}

#[test]
fn checkpoint_config_mismatch_is_an_error() {
    let ds = load_dataset("synthetic-shapes", &LoadOptions { train_size: Some(20), test_size: Some(10), ..Default::default() })
        .unwrap();
    let cfg = small_cfg();
    let dir = tempfile::tempdir().unwrap();
    let bundle = ModelBundle::<f64>::new(cfg.bundle_spec(), 1).unwrap();
    let opt = geossl::nn::Optimizer::new(cfg.optimizer.clone());
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&path, &cfg, 0, 0, None, &bundle, &opt).unwrap();
    let e = embed_checkpoint(&path, &ds.train, &ds.test, &ds.stats, Some(&cfg)).unwrap();
    assert_eq!(e.train.0, extract_embeddings(&bundle, &ds.train, &ds.stats).unwrap().0);
    let mut other = cfg.clone();
    other.seed = 99;
    assert!(matches!(
        embed_checkpoint(&path, &ds.train, &ds.test, &ds.stats, Some(&other)),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn learning_curve_points() {
    let ds = load_dataset("synthetic-shapes", &LoadOptions { train_size: Some(32), test_size: Some(12), ..Default::default() })
        .unwrap();
    let cfg = small_cfg();
    let dir = tempfile::tempdir().unwrap();
    let out = run_training::<f32>(&cfg, &ds, &RunOptions::new(dir.path())).unwrap();
    let eval = LinearEvalConfig { epochs: 5, ..LinearEvalConfig::desk() };

    let curve = learning_curve(std::slice::from_ref(&out.series), &ds, &eval).unwrap();
    assert_eq!(curve.iter().map(|p| p.epoch).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(curve.iter().all(|p| p.std == 0.0 && p.accuracies.len() == 1));

    let single = CheckpointSeries { entries: vec![out.series.entries[1].clone()] };
    let curve = learning_curve(&[single.clone()], &ds, &eval).unwrap();
    assert_eq!(curve.len(), 1);

    let mut cfg2 = cfg.clone();
    cfg2.seed += 1;
    let dir2 = tempfile::tempdir().unwrap();
    let out2 = run_training::<f32>(&cfg2, &ds, &RunOptions::new(dir2.path())).unwrap();
    let curve = learning_curve(&[out.series.clone(), out2.series], &ds, &eval).unwrap();
    assert_eq!(curve.len(), 3);
    assert!(curve.iter().all(|p| p.accuracies.len() == 2));

    assert!(learning_curve(&[], &ds, &eval).is_err());
    assert!(learning_curve(&[CheckpointSeries::default()], &ds, &eval).is_err());
    let missing = CheckpointSeries {
        entries: vec![CheckpointRecord { epoch: 0, path: dir.path().join("nope.ckpt"), losses: None }],
    };
    assert!(learning_curve(&[missing], &ds, &eval).is_err());
}
