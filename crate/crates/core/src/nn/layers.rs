use ndarray::{Array2, Array4};

use super::param::{Module, Param};
use crate::scalar::Scalar;

pub fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `d` where the post-activation output was not positive.
pub fn relu_backward<T: Scalar>(d: &mut [T], out: &[T]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn maxpool2_forward<T: Scalar>(x: &Array4<T>) -> (Array4<T>, Vec<u32>) {
    let (n, h, w, c) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    let mut out = vec![T::zero(); n * oh * ow * c];
    let mut arg = vec![0u32; out.len()];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = ((b * oh + oy) * ow + ox) * c;
                for ch in 0..c {
                    let mut best = usize::MAX;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if best == usize::MAX || xs[i] > xs[best] {
                            best = i;
                        }
                    }
                    out[o + ch] = xs[best];
                    arg[o + ch] = best as u32;
                }
            }
        }
    }
    (Array4::from_shape_vec((n, oh, ow, c), out).expect("pool dims"), arg)
}

pub fn maxpool2_backward<T: Scalar>(dout: &Array4<T>, arg: &[u32], in_shape: (usize, usize, usize, usize)) -> Array4<T> {
    let mut dx = Array4::zeros(in_shape);
    let dxs = dx.as_slice_mut().expect("fresh array");
    for (&i, &g) in arg.iter().zip(dout.iter()) {
        dxs[i as usize] += g;
    }
    dx
}

pub fn global_avg_pool<T: Scalar>(x: &Array4<T>) -> Array2<T> {
    let (n, h, w, c) = x.dim();
    let inv = T::lit(1.0 / (h * w) as f64);
    let mut out = Array2::zeros((n, c));
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                for ch in 0..c {
                    out[[b, ch]] += x[[b, y, xx, ch]];
                }
            }
        }
    }
    out.mapv_inplace(|v| v * inv);
    out
}

pub fn global_avg_pool_backward<T: Scalar>(d: &Array2<T>, in_shape: (usize, usize, usize, usize)) -> Array4<T> {
    let (_, h, w, _) = in_shape;
    let inv = T::lit(1.0 / (h * w) as f64);
    Array4::from_shape_fn(in_shape, |(b, _, _, ch)| d[[b, ch]] * inv)
}

/// Batch normalization over the channel (last) axis of NHWC tensors.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mean: Vec<T>,
    var_unbiased: Vec<T>,
    train: bool,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), &[channels], T::one()),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            running_mean: Param::zeros(format!("{name}.running_mean"), &[channels]).buffer(),
            running_var: Param::filled(format!("{name}.running_var"), &[channels], T::one()).buffer(),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Array4<T>, train: bool) -> (Array4<T>, BnCache<T>) {
        let c = self.channels();
        let dims = x.dim();
        assert_eq!(dims.3, c, "batch-norm channels");
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().expect("standard layout");
        let m = xs.len() / c;
        let (mean, var, var_unbiased) = if train {
            let mut mean = vec![0.0f64; c];
            for row in xs.chunks(c) {
                for (a, &v) in mean.iter_mut().zip(row) {
                    *a += v.as_f64();
                }
            }
            mean.iter_mut().for_each(|a| *a /= m as f64);
            let mut var = vec![0.0f64; c];
            for row in xs.chunks(c) {
                for ((a, &v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    let d = v.as_f64() - mu;
                    *a += d * d;
                }
            }
            let unb: Vec<T> = var.iter().map(|v| T::lit(v / (m.max(2) - 1) as f64)).collect();
            (
                mean.into_iter().map(T::lit).collect::<Vec<T>>(),
                var.iter().map(|v| T::lit(v / m as f64)).collect::<Vec<T>>(),
                unb,
            )
        } else {
            (self.running_mean.value.clone(), self.running_var.value.clone(), Vec::new())
        };
        let eps = T::lit(self.eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xs.len()];
        let mut y = vec![T::zero(); xs.len()];
        for ((row, hrow), yrow) in xs.chunks(c).zip(xhat.chunks_mut(c)).zip(y.chunks_mut(c)) {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                hrow[j] = h;
                yrow[j] = self.gamma.value[j] * h + self.beta.value[j];
            }
        }
        let y = Array4::from_shape_vec(dims, y).expect("bn dims");
        (y, BnCache { xhat, inv_std, mean, var_unbiased, train })
    }

    /// Folds the batch statistics of a training forward pass into the running averages.
    pub fn commit(&mut self, cache: &BnCache<T>) {
        if !cache.train {
            return;
        }
        let mom = T::lit(self.momentum);
        let keep = T::one() - mom;
        for j in 0..self.channels() {
            self.running_mean.value[j] = keep * self.running_mean.value[j] + mom * cache.mean[j];
            self.running_var.value[j] = keep * self.running_var.value[j] + mom * cache.var_unbiased[j];
        }
    }

    pub fn backward(&mut self, cache: &BnCache<T>, dy: &Array4<T>) -> Array4<T> {
        let c = self.channels();
        let dims = dy.dim();
        let ds = dy.as_standard_layout();
        let ds = ds.as_slice().expect("standard layout");
        let m = ds.len() / c;
        let mut sum_dh = vec![T::zero(); c];
        let mut sum_dh_h = vec![T::zero(); c];
        for (drow, hrow) in ds.chunks(c).zip(cache.xhat.chunks(c)) {
            for j in 0..c {
                self.gamma.grad[j] += drow[j] * hrow[j];
                self.beta.grad[j] += drow[j];
                let dh = drow[j] * self.gamma.value[j];
                sum_dh[j] += dh;
                sum_dh_h[j] += dh * hrow[j];
            }
        }
        let mut dx = vec![T::zero(); ds.len()];
        if cache.train {
            let mf = T::lit(m as f64);
            for ((drow, hrow), xrow) in ds.chunks(c).zip(cache.xhat.chunks(c)).zip(dx.chunks_mut(c)) {
                for j in 0..c {
                    let dh = drow[j] * self.gamma.value[j];
                    xrow[j] = cache.inv_std[j] / mf * (mf * dh - sum_dh[j] - hrow[j] * sum_dh_h[j]);
                }
            }
        } else {
            for (drow, xrow) in ds.chunks(c).zip(dx.chunks_mut(c)) {
                for j in 0..c {
                    xrow[j] = drow[j] * self.gamma.value[j] * cache.inv_std[j];
                }
            }
        }
        Array4::from_shape_vec(dims, dx).expect("bn dims")
    }
}

impl<T: Scalar> Module<T> for BatchNorm<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}
