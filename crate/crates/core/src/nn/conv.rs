use ndarray::linalg::general_mat_mul;
use ndarray::{Array4, ArrayView2, ArrayViewMut2};
use rand::Rng;

use super::param::{Module, Param};
use crate::scalar::Scalar;

/// 2-D convolution on NHWC tensors, lowered to a single GEMM via im2col.
/// Weight layout is `[k * k * c_in, c_out]` with `(ky, kx, c)` row order.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    col: Vec<T>,
    in_shape: (usize, usize, usize, usize),
    out_hw: (usize, usize),
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel * kernel * cin;
        Self {
            cin,
            cout,
            kernel,
            stride,
            pad,
            weight: Param::he_normal(format!("{name}.weight"), &[fan_in, cout], fan_in, rng),
            bias: bias.then(|| Param::zeros(format!("{name}.bias"), &[cout])),
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &[T], (n, h, w, c): (usize, usize, usize, usize), (oh, ow): (usize, usize)) -> Vec<T> {
        let k = self.kernel;
        let kkc = k * k * c;
        let mut col = vec![T::zero(); n * oh * ow * kkc];
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * kkc;
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let src = ((b * h + iy as usize) * w + ix as usize) * c;
                            let dst = row + (ky * k + kx) * c;
                            col[dst..dst + c].copy_from_slice(&x[src..src + c]);
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, dcol: &[T], (n, h, w, c): (usize, usize, usize, usize), (oh, ow): (usize, usize)) -> Vec<T> {
        let k = self.kernel;
        let kkc = k * k * c;
        let mut dx = vec![T::zero(); n * h * w * c];
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * kkc;
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let dst = ((b * h + iy as usize) * w + ix as usize) * c;
                            let src = row + (ky * k + kx) * c;
                            for (d, &s) in dx[dst..dst + c].iter_mut().zip(&dcol[src..src + c]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Array4<T>) -> (Array4<T>, ConvCache<T>) {
        let (n, h, w, c) = x.dim();
        assert_eq!(c, self.cin, "conv input channels");
        let (oh, ow) = self.out_hw(h, w);
        let xs = x.as_standard_layout();
        let col = self.im2col(xs.as_slice().expect("standard layout"), (n, h, w, c), (oh, ow));
        let rows = n * oh * ow;
        let kkc = self.kernel * self.kernel * c;
        let mut out = vec![T::zero(); rows * self.cout];
        if let Some(b) = &self.bias {
            for r in out.chunks_mut(self.cout) {
                r.copy_from_slice(&b.value);
            }
        }
        {
            let a = ArrayView2::from_shape((rows, kkc), &col).expect("col shape");
            let wv = ArrayView2::from_shape((kkc, self.cout), &self.weight.value).expect("weight shape");
            let mut o = ArrayViewMut2::from_shape((rows, self.cout), &mut out).expect("out shape");
            let beta = if self.bias.is_some() { T::one() } else { T::zero() };
            general_mat_mul(T::one(), &a, &wv, beta, &mut o);
        }
        let out = Array4::from_shape_vec((n, oh, ow, self.cout), out).expect("out dims");
        (out, ConvCache { col, in_shape: (n, h, w, c), out_hw: (oh, ow) })
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(&mut self, cache: &ConvCache<T>, dout: &Array4<T>, need_dx: bool) -> Option<Array4<T>> {
        let (n, h, w, c) = cache.in_shape;
        let (oh, ow) = cache.out_hw;
        let rows = n * oh * ow;
        let kkc = self.kernel * self.kernel * c;
        let d = dout.as_standard_layout();
        let ds = d.as_slice().expect("standard layout");
        let dv = ArrayView2::from_shape((rows, self.cout), ds).expect("dout shape");
        {
            let col = ArrayView2::from_shape((rows, kkc), &cache.col).expect("col shape");
            let mut g = ArrayViewMut2::from_shape((kkc, self.cout), &mut self.weight.grad).expect("grad shape");
            general_mat_mul(T::one(), &col.t(), &dv, T::one(), &mut g);
        }
        if let Some(b) = &mut self.bias {
            for r in ds.chunks(self.cout) {
                for (g, &v) in b.grad.iter_mut().zip(r) {
                    *g += v;
                }
            }
        }
        if !need_dx {
            return None;
        }
        let mut dcol = vec![T::zero(); rows * kkc];
        {
            let wv = ArrayView2::from_shape((kkc, self.cout), &self.weight.value).expect("weight shape");
            let mut dc = ArrayViewMut2::from_shape((rows, kkc), &mut dcol).expect("dcol shape");
            general_mat_mul(T::one(), &dv, &wv.t(), T::zero(), &mut dc);
        }
        let dx = self.col2im(&dcol, (n, h, w, c), (oh, ow));
        Some(Array4::from_shape_vec((n, h, w, c), dx).expect("dx dims"))
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}
