use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use geossl::augmentation::ops::{gaussian_blur3, resized_crop};
use geossl::augmentation::*;
use geossl::data::natural_like_image;
use geossl::geometry::{estimate_homography_dlt, warp_image, HomographyMatrix, Interpolation, TransformMode};
use geossl::image::Image;
use geossl::Error;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn source() -> Image<f64> {
    natural_like_image(32, 32, 11)
}

#[test]
fn default_sets_are_disjoint() {
    validate_disjointness(&B1Config::default(), &B2Config::default()).unwrap();
    for mode in TransformMode::ALL {
        validate_disjointness(&B1Config::default(), &B2Config::with_mode(mode)).unwrap();
    }
    check_disjoint(&B1Config::default().order, &[]).unwrap();
}

#[test]
fn crop_in_b2_is_a_violation() {
    let mut b2 = B2Config::default();
    b2.extra.push(BaseTransform::RandomCrop);
    match validate_disjointness(&B1Config::default(), &b2) {
        Err(Error::Disjointness(v)) => assert_eq!(v, vec!["random crop".to_string()]),
        other => panic!("{other:?}"),
    }
    assert!(TripleSampler::new(B1Config::default(), b2).is_err());

    let mut b2 = B2Config::default();
    b2.extra.push(BaseTransform::HorizontalFlip);
    match validate_disjointness(&B1Config::default(), &b2) {
        Err(Error::Disjointness(v)) => assert_eq!(v, vec!["horizontal flip".to_string()]),
        other => panic!("{other:?}"),
    }
    let mut b1 = B1Config::default();
    b1.order.retain(|t| *t != BaseTransform::RandomCrop);
    let mut b2 = B2Config::default();
    b2.extra.push(BaseTransform::RandomCrop);
    assert!(validate_disjointness(&b1, &b2).is_err());
}

#[test]
fn b1_sampling_is_deterministic_and_replayable() {
    let cfg = B1Config::default();
    let a = sample_b1(&mut rng(3), &cfg, 32, 32);
    let b = sample_b1(&mut rng(3), &cfg, 32, 32);
    assert_eq!(a, b);
    let back = AugmentationSpec::from_text(&a.to_text()).unwrap();
    assert_eq!(back, a);
    let x = source();
    assert_eq!(apply_b1(&x, &a).data(), apply_b1(&x, &back).data());
    let order: Vec<BaseTransform> = a.steps.iter().map(|s| s.op.kind()).collect();
    assert_eq!(order, cfg.order);
}

#[test]
fn only_certain_transforms_fire_at_probability_zero() {
    let cfg = B1Config::deterministic_crop_only();
    for seed in 0..50 {
        let spec = sample_b1(&mut rng(seed), &cfg, 32, 32);
        let fired: Vec<BaseTransform> = spec.steps.iter().filter(|s| s.fired).map(|s| s.op.kind()).collect();
        assert_eq!(fired, vec![BaseTransform::RandomCrop]);
    }
}

#[test]
fn firing_frequencies_match_configured_probabilities() {
    let cfg = B1Config::default();
    let n = 10_000;
    let mut r = rng(4);
    let mut counts = [0usize; 5];
    for _ in 0..n {
        let spec = sample_b1(&mut r, &cfg, 32, 32);
        for (c, s) in counts.iter_mut().zip(&spec.steps) {
            *c += s.fired as usize;
        }
    }
    let probs = [1.0, 0.5, 0.8, 0.2, 1.0];
    for (c, p) in counts.iter().zip(probs) {
        let f = *c as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() <= (3.0 * sigma).max(1e-12), "{f} vs {p}");
    }
    let flip = counts[1] as f64 / n as f64;
    assert!((flip - 0.5).abs() <= 0.02);
}

#[test]
fn outputs_have_training_resolution() {
    let x = natural_like_image(40, 48, 2);
    for seed in 0..20 {
        let spec = sample_b1(&mut rng(seed), &B1Config::default(), 40, 48);
        assert_eq!(apply_b1(&x, &spec).dims(), (32, 32, 3));
    }
}

#[test]
fn full_area_crop_alone_resizes_the_original() {
    let x = natural_like_image(40, 40, 3);
    let spec = AugmentationSpec {
        output_height: 32,
        output_width: 32,
        steps: vec![AugStep { fired: true, op: AugOp::RandomCrop { top: 0, left: 0, height: 40, width: 40 } }],
    };
    assert_eq!(apply_b1(&x, &spec), resized_crop(&x, 0, 0, 40, 40, 32, 32));
}

#[test]
fn grayscale_equalizes_channels() {
    let mut cfg = B1Config::deterministic_crop_only();
    cfg.grayscale_prob = 1.0;
    let spec = sample_b1(&mut rng(5), &cfg, 32, 32);
    assert!(spec.fired(BaseTransform::Grayscale));
    let out = apply_b1(&source(), &spec);
    for px in out.data().chunks(3) {
        assert!(px[0] == px[1] && px[1] == px[2]);
    }
}

/// Energy of the upper half of the spatial frequency band, by direct DFT.
fn high_frequency_energy(img: &Image<f64>) -> f64 {
    let (h, w, c) = img.dims();
    let mut total = 0.0;
    for ch in 0..c {
        for u in 0..h {
            for v in 0..w {
                let fu = u.min(h - u) as f64 / h as f64;
                let fv = v.min(w - v) as f64 / w as f64;
                if fu.hypot(fv) < 0.25 {
                    continue;
                }
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let a = -2.0 * std::f64::consts::PI * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                        let val = img.at(y, x, ch);
                        re += val * a.cos();
                        im += val * a.sin();
                    }
                }
                total += re * re + im * im;
            }
        }
    }
    total
}

#[test]
fn stronger_blur_removes_more_high_frequencies() {
    let x = natural_like_image(16, 16, 9);
    let weak = high_frequency_energy(&gaussian_blur3(&x, 0.1));
    let strong = high_frequency_energy(&gaussian_blur3(&x, 2.0));
    assert!(strong < weak, "{strong} vs {weak}");
    assert!(weak < high_frequency_energy(&x));
}

#[test]
fn b2_modes_produce_expected_lengths() {
    for (mode, m) in [
        (TransformMode::Affine, 6),
        (TransformMode::Homography, 8),
        (TransformMode::Rotation, 1),
        (TransformMode::Translation, 2),
        (TransformMode::Scale, 1),
        (TransformMode::Shear, 2),
    ] {
        let (_, p) = sample_b2(&mut rng(6), &B2Config::with_mode(mode), 32, 32).unwrap();
        assert_eq!(p.values.len(), m);
    }
}

#[test]
fn collapsed_ranges_give_identity() {
    let (m, p) = sample_b2(&mut rng(7), &B2Config::identity(TransformMode::Affine), 32, 32).unwrap();
    assert_eq!(p.values, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    assert!(m.max_abs_diff(&HomographyMatrix::identity()) < 1e-15);
}

#[test]
fn b2_draws_cover_their_ranges() {
    let cfg = B2Config::default();
    let mut r = rng(8);
    let n = 10_000;
    let draws: Vec<_> = (0..n).map(|_| sample_affine_raw(&mut r, &cfg, 32, 32)).collect();
    let check = |name: &str, vals: Vec<f64>, (lo, hi): (f64, f64)| {
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (hi - lo) / 12f64.sqrt() / (vals.len() as f64).sqrt();
        assert!(min >= lo && max <= hi, "{name} [{min}, {max}]");
        assert!(min < lo + 0.01 * (hi - lo) && max > hi - 0.01 * (hi - lo), "{name} coverage");
        assert!((mean - (lo + hi) / 2.0).abs() < 4.0 * sd, "{name} mean {mean}");
    };
    check("rotation", draws.iter().map(|p| p.rotation_deg).collect(), (-90.0, 90.0));
    check("tx", draws.iter().map(|p| p.translate_x).collect(), (0.0, 8.0));
    check("ty", draws.iter().map(|p| p.translate_y).collect(), (0.0, 8.0));
    check("scale", draws.iter().map(|p| p.scale).collect(), (0.7, 1.3));
    check("shear x", draws.iter().map(|p| p.shear_x_deg).collect(), (-25.0, 25.0));
    check("shear y", draws.iter().map(|p| p.shear_y_deg).collect(), (-25.0, 25.0));

    let rot_only = B2Config::with_mode(TransformMode::Rotation);
    let p = sample_affine_raw(&mut r, &rot_only, 32, 32);
    assert_eq!((p.translate_x, p.translate_y, p.scale, p.shear_x_deg, p.shear_y_deg), (0.0, 0.0, 1.0, 0.0, 0.0));
}

#[test]
fn identity_b2_with_nearest_keeps_x1() {
    let mut b2 = B2Config::identity(TransformMode::Affine);
    b2.interpolation = Interpolation::Nearest;
    let sampler = TripleSampler::new(B1Config::default(), b2).unwrap();
    let t = sampler.triple(&source(), &mut rng(9)).unwrap();
    assert_eq!(t.x1_prime, t.x1);
    assert_eq!(t.phi.values, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn triples_are_reproducible_and_share_dims() {
    let sampler = TripleSampler::new(B1Config::default(), B2Config::with_mode(TransformMode::Homography)).unwrap();
    let a = sampler.triple(&source(), &mut rng(10)).unwrap();
    let b = sampler.triple(&source(), &mut rng(10)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.x1.dims(), (32, 32, 3));
    assert_eq!(a.x2.dims(), a.x1.dims());
    assert_eq!(a.x1_prime.dims(), a.x1.dims());
    assert!(a.x2_prime.is_none());
    let (_, _, v1, v2) = sampler.views(&source(), &mut rng(10));
    assert_eq!((v1, v2), (a.x1, a.x2));
}

#[test]
fn phi_regenerates_x1_prime_bitwise() {
    for mode in TransformMode::ALL {
        let b2 = B2Config::with_mode(mode);
        let sampler = TripleSampler::new(B1Config::default(), b2.clone()).unwrap().with_second_warp(true);
        for seed in 0..10 {
            let t = sampler.triple(&source(), &mut rng(100 + seed)).unwrap();
            let m = t.phi.to_matrix(32, 32).unwrap();
            let again = warp_image(&t.x1, &m, b2.interpolation, b2.fill).unwrap();
            assert_eq!(again.data(), t.x1_prime.data());
            let w2 = t.x2_prime.as_ref().unwrap();
            assert_eq!(warp_image(&t.x2, &w2.matrix, b2.interpolation, b2.fill).unwrap(), w2.image);
        }
    }
}

/// Image whose first two channels hold the pixel coordinates. Bilinear
/// sampling reproduces linear functions exactly, so every interior pixel of
/// a warped copy names the source point it came from.
fn coordinate_image() -> Image<f64> {
    Image::from_fn(32, 32, 3, |y, x, c| match c {
        0 => x as f64 / 31.0,
        1 => y as f64 / 31.0,
        _ => 0.5,
    })
}

fn tracked_matrix(warped: &Image<f64>, m: &HomographyMatrix<f64>) -> Option<HomographyMatrix<f64>> {
    let inv = m.invert().unwrap();
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for y in (2..30).step_by(3) {
        for x in (2..30).step_by(3) {
            let (sx, sy) = inv.apply_to_point(x as f64, y as f64).unwrap();
            if sx < 0.5 || sy < 0.5 || sx > 30.5 || sy > 30.5 {
                continue;
            }
            src.push((warped.at(y, x, 0) * 31.0, warped.at(y, x, 1) * 31.0));
            dst.push((x as f64, y as f64));
        }
    }
    (src.len() >= 4).then(|| estimate_homography_dlt(&src, &dst).unwrap())
}

#[test]
fn tracked_points_recover_the_sampled_homography() {
    let mut b1 = B1Config::deterministic_crop_only();
    b1.crop.area = (1.0, 1.0);
    b1.crop.ratio = (1.0, 1.0);
    let mut recovered = 0;
    for mode in [TransformMode::Affine, TransformMode::Homography, TransformMode::Shear] {
        let sampler = TripleSampler::new(b1.clone(), B2Config::with_mode(mode)).unwrap();
        for seed in 0..20 {
            let t = sampler.triple(&coordinate_image(), &mut rng(200 + seed)).unwrap();
            assert_eq!(t.x1, coordinate_image());
            if let Some(est) = tracked_matrix(&t.x1_prime, &t.matrix) {
                assert!(est.max_abs_diff(&t.matrix) < 1e-6, "{mode:?}: {}", est.max_abs_diff(&t.matrix));
                recovered += 1;
            }
        }
    }
    assert!(recovered >= 50);
}
