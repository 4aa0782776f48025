//! Pixel operations behind the B1 transforms. Images are in `[0, 1]`.

use crate::image::Image;
use crate::scalar::Scalar;

/// Bilinear resample of the window `[top, top + h) x [left, left + w)` to
/// `out_h x out_w`, sampling at pixel centres.
pub fn resized_crop<T: Scalar>(
    img: &Image<T>,
    top: usize,
    left: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Image<T> {
    let ch = img.channels();
    let (sy, sx) = (h as f64 / out_h as f64, w as f64 / out_w as f64);
    let mut out = Image::filled(out_h, out_w, ch, T::zero());
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = T::lit(fy - y0 as f64);
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = T::lit(fx - x0 as f64);
            let p00 = img.pixel(top + y0, left + x0);
            let p01 = img.pixel(top + y0, left + x1);
            let p10 = img.pixel(top + y1, left + x0);
            let p11 = img.pixel(top + y1, left + x1);
            let dst = out.pixel_mut(oy, ox);
            for c in 0..ch {
                let a = p00[c] + wx * (p01[c] - p00[c]);
                let b = p10[c] + wx * (p11[c] - p10[c]);
                dst[c] = a + wy * (b - a);
            }
        }
    }
    out
}

pub fn horizontal_flip<T: Scalar>(img: &Image<T>) -> Image<T> {
    Image::from_fn(img.height(), img.width(), img.channels(), |y, x, c| {
        img.at(y, img.width() - 1 - x, c)
    })
}

#[inline]
fn luma<T: Scalar>(p: &[T]) -> T {
    if p.len() >= 3 {
        T::lit(0.299) * p[0] + T::lit(0.587) * p[1] + T::lit(0.114) * p[2]
    } else {
        p[0]
    }
}

fn clamp01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

pub fn grayscale<T: Scalar>(img: &Image<T>) -> Image<T> {
    let mut out = img.clone();
    if img.channels() < 3 {
        return out;
    }
    for y in 0..img.height() {
        for x in 0..img.width() {
            let l = luma(img.pixel(y, x));
            out.pixel_mut(y, x).iter_mut().for_each(|v| *v = l);
        }
    }
    out
}

pub fn adjust_brightness<T: Scalar>(img: &mut Image<T>, factor: T) {
    img.data_mut().iter_mut().for_each(|v| *v = clamp01(*v * factor));
}

pub fn adjust_contrast<T: Scalar>(img: &mut Image<T>, factor: T) {
    let n = img.height() * img.width();
    let mut mean = T::zero();
    for y in 0..img.height() {
        for x in 0..img.width() {
            mean += luma(img.pixel(y, x));
        }
    }
    mean /= T::lit(n as f64);
    let keep = T::one() - factor;
    img.data_mut()
        .iter_mut()
        .for_each(|v| *v = clamp01(factor * *v + keep * mean));
}

pub fn adjust_saturation<T: Scalar>(img: &mut Image<T>, factor: T) {
    if img.channels() < 3 {
        return;
    }
    let keep = T::one() - factor;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.pixel_mut(y, x);
            let l = luma(p);
            p.iter_mut().for_each(|v| *v = clamp01(factor * *v + keep * l));
        }
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as i32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Rotates hue by `shift` turns (`shift` in `[-0.5, 0.5]`).
pub fn adjust_hue<T: Scalar>(img: &mut Image<T>, shift: f64) {
    if img.channels() < 3 || shift == 0.0 {
        return;
    }
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.pixel_mut(y, x);
            let (h, s, v) = rgb_to_hsv(p[0].as_f64(), p[1].as_f64(), p[2].as_f64());
            let (r, g, b) = hsv_to_rgb(h + shift, s, v);
            p[0] = clamp01(T::lit(r));
            p[1] = clamp01(T::lit(g));
            p[2] = clamp01(T::lit(b));
        }
    }
}

/// 3x3 Gaussian blur with reflect padding.
pub fn gaussian_blur3<T: Scalar>(img: &Image<T>, variance: f64) -> Image<T> {
    let k1 = (-1.0 / (2.0 * variance)).exp();
    let norm = 1.0 + 2.0 * k1;
    let kernel = [T::lit(k1 / norm), T::lit(1.0 / norm), T::lit(k1 / norm)];
    let (h, w, ch) = img.dims();
    let reflect = |i: isize, n: usize| -> usize {
        if n == 1 {
            0
        } else if i < 0 {
            (-i) as usize
        } else if i as usize >= n {
            2 * (n - 1) - i as usize
        } else {
            i as usize
        }
    };
    let mut tmp = Image::filled(h, w, ch, T::zero());
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = T::zero();
                for (k, &kw) in kernel.iter().enumerate() {
                    acc += kw * img.at(y, reflect(x as isize + k as isize - 1, w), c);
                }
                tmp.pixel_mut(y, x)[c] = acc;
            }
        }
    }
    let mut out = Image::filled(h, w, ch, T::zero());
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = T::zero();
                for (k, &kw) in kernel.iter().enumerate() {
                    acc += kw * tmp.at(reflect(y as isize + k as isize - 1, h), x, c);
                }
                out.pixel_mut(y, x)[c] = acc;
            }
        }
    }
    out
}
