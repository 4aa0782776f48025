use geossl::nn::{BatchNorm, Conv2d, Encoder, EncoderSpec, Mlp, Module, Optimizer, OptimizerConfig, OptimizerKind, Param};
use geossl::nn::{maxpool2_backward, maxpool2_forward};
use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand4(rng: &mut ChaCha8Rng, d: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_simple_fn(d, || rng.gen_range(-1.0..1.0))
}

fn rand2(rng: &mut ChaCha8Rng, d: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(d, || rng.gen_range(-1.0..1.0))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Compares analytic gradients of every param against central differences
/// of `loss`, which must be a pure function of the module.
fn check_params<M: Module<f64> + Clone>(m: &M, loss: impl Fn(&M) -> f64, analytic: &M, tol: f64) {
    let eps = 1e-5;
    let grads: Vec<(String, Vec<f64>)> = analytic.params().iter().map(|p| (p.name.clone(), p.grad.clone())).collect();
    for (pi, (name, g)) in grads.iter().enumerate() {
        let stride = (g.len() / 7).max(1);
        for i in (0..g.len()).step_by(stride) {
            let bump = |delta: f64| {
                let mut mm = m.clone();
                let mut k = 0;
                mm.visit_mut(&mut |p: &mut Param<f64>| {
                    if k == pi {
                        p.value[i] += delta;
                    }
                    k += 1;
                });
                loss(&mm)
            };
            let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
            let trainable = analytic.params()[pi].trainable;
            if !trainable {
                continue;
            }
            assert!(rel_err(fd, g[i]) < tol, "{name}[{i}]: fd {fd} vs analytic {}", g[i]);
        }
    }
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (1, 2, 0), (1, 1, 0)] {
        let conv = Conv2d::<f64>::new("c", 3, 4, k, stride, pad, true, &mut rng);
        let x = rand4(&mut rng, (2, 5, 6, 3));
        let (y, cache) = conv.forward(&x);
        let r = rand4(&mut rng, y.dim());
        let loss = |c: &Conv2d<f64>, x: &Array4<f64>| (c.forward(x).0 * &r).sum();
        let mut an = conv.clone();
        let dx = an.backward(&cache, &r, true).unwrap();
        check_params(&conv, |c| loss(c, &x), &an, 1e-6);
        let eps = 1e-6;
        for i in (0..x.len()).step_by(11) {
            let mut xp = x.clone();
            xp.as_slice_mut().unwrap()[i] += eps;
            let mut xm = x.clone();
            xm.as_slice_mut().unwrap()[i] -= eps;
            let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * eps);
            assert!(rel_err(fd, dx.as_slice().unwrap()[i]) < 1e-6);
        }
    }
}

#[test]
fn conv_matches_direct_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let conv = Conv2d::<f64>::new("c", 2, 3, 3, 2, 1, true, &mut rng);
    let x = rand4(&mut rng, (1, 5, 5, 2));
    let (y, _) = conv.forward(&x);
    assert_eq!(y.dim(), (1, 3, 3, 3));
    for oy in 0..3 {
        for ox in 0..3 {
            for o in 0..3 {
                let mut acc = conv.bias.as_ref().unwrap().value[o];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let iy = (oy * 2 + ky) as isize - 1;
                        let ix = (ox * 2 + kx) as isize - 1;
                        if !(0..5).contains(&iy) || !(0..5).contains(&ix) {
                            continue;
                        }
                        for c in 0..2 {
                            acc += x[[0, iy as usize, ix as usize, c]] * conv.weight.value[((ky * 3 + kx) * 2 + c) * 3 + o];
                        }
                    }
                }
                assert!((acc - y[[0, oy, ox, o]]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn batchnorm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bn = BatchNorm::<f64>::new("bn", 3);
    bn.gamma.value = vec![0.5, 1.5, -0.7];
    bn.beta.value = vec![0.1, -0.2, 0.3];
    let x = rand4(&mut rng, (3, 2, 2, 3));
    let (y, cache) = bn.forward(&x, true);
    let r = rand4(&mut rng, y.dim());
    let loss = |b: &BatchNorm<f64>, x: &Array4<f64>| (b.forward(x, true).0 * &r).sum();
    let mut an = bn.clone();
    let dx = an.backward(&cache, &r);
    check_params(&bn, |b| loss(b, &x), &an, 1e-6);
    let eps = 1e-6;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.as_slice_mut().unwrap()[i] += eps;
        let mut xm = x.clone();
        xm.as_slice_mut().unwrap()[i] -= eps;
        let fd = (loss(&bn, &xp) - loss(&bn, &xm)) / (2.0 * eps);
        assert!(rel_err(fd, dx.as_slice().unwrap()[i]) < 1e-5, "dx[{i}] {fd} vs {}", dx.as_slice().unwrap()[i]);
    }
}

#[test]
fn batchnorm_running_stats_update() {
    let mut bn = BatchNorm::<f64>::new("bn", 1);
    let x = Array4::from_shape_vec((4, 1, 1, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let (y, cache) = bn.forward(&x, true);
    assert!(y.sum().abs() < 1e-12);
    bn.commit(&cache);
    assert!((bn.running_mean.value[0] - 0.25).abs() < 1e-12);
    let unbiased = 5.0 / 3.0;
    assert!((bn.running_var.value[0] - (0.9 + 0.1 * unbiased)).abs() < 1e-12);
}

#[test]
fn maxpool_routes_gradient_to_argmax() {
    let x = Array4::from_shape_vec((1, 2, 2, 1), vec![1.0, 4.0, 3.0, 2.0]).unwrap();
    let (y, arg) = maxpool2_forward(&x);
    assert_eq!(y[[0, 0, 0, 0]], 4.0);
    let d = Array4::from_elem((1, 1, 1, 1), 2.0);
    let dx = maxpool2_backward(&d, &arg, x.dim());
    assert_eq!(dx.as_slice().unwrap(), &[0.0, 2.0, 0.0, 0.0]);
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mlp = Mlp::<f64>::new("m", 5, 7, 3, &mut rng);
    let x = rand2(&mut rng, (4, 5));
    let (y, cache) = mlp.forward(&x);
    let r = rand2(&mut rng, y.dim());
    let mut an = mlp.clone();
    an.backward(&cache, &r, true);
    check_params(&mlp, |m| (m.forward(&x).0 * &r).sum(), &an, 1e-6);
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let specs = [
        EncoderSpec::SmallCnn { channels: vec![4, 5, 6] },
        EncoderSpec::ResNet { width: 2, blocks: vec![1, 1] },
    ];
    for spec in specs {
        let enc = Encoder::<f64>::new("f", &spec, 3, &mut rng).unwrap();
        let x = rand4(&mut rng, (3, 8, 8, 3));
        let (z, cache) = enc.forward(&x, true);
        assert_eq!(z.ncols(), spec.output_dim());
        let r = rand2(&mut rng, z.dim());
        let mut an = enc.clone();
        an.backward(&cache, &r);
        check_params(&enc, |e| (e.forward(&x, true).0 * &r).sum(), &an, 1e-4);
    }
}

#[test]
fn resnet50_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = EncoderSpec::resnet50();
    assert_eq!(spec.output_dim(), 2048);
    let enc = Encoder::<f32>::new("f", &spec, 3, &mut rng).unwrap();
    assert!(enc.num_params() > 20_000_000);
    let x = Array4::<f32>::zeros((1, 32, 32, 3));
    let z = enc.infer(&x);
    assert_eq!(z.dim(), (1, 2048));
}

#[test]
fn sgd_and_adam_steps() {
    let mut lin = Mlp::<f64>::new("m", 1, 1, 1, &mut ChaCha8Rng::seed_from_u64(0));
    lin.visit_mut(&mut |p| {
        p.value.iter_mut().for_each(|v| *v = 1.0);
        p.grad.iter_mut().for_each(|g| *g = 0.5);
    });
    let mut sgd = Optimizer::new(OptimizerConfig { kind: OptimizerKind::Sgd, weight_decay: 0.0, ..Default::default() });
    sgd.apply(&mut lin, 0.1);
    assert!((lin.fc1.weight.value[0] - 0.95).abs() < 1e-12);
    sgd.apply(&mut lin, 0.1);
    assert!((lin.fc1.weight.value[0] - (0.95 - 0.1 * (0.9 * 0.5 + 0.5))).abs() < 1e-12);

    let mut adam = Optimizer::new(OptimizerConfig { weight_decay: 0.0, ..Default::default() });
    lin.visit_mut(&mut |p| p.value.iter_mut().for_each(|v| *v = 1.0));
    adam.apply(&mut lin, 0.01);
    assert!((lin.fc1.weight.value[0] - (1.0 - 0.01 * 0.5 / (0.5 + 1e-8))).abs() < 1e-9);
}
