use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Dense `height x width x channels` image, channel-last, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), height * width * channels, "image buffer size");
        Self { height, width, channels, data }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self::from_vec(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { height, width, channels, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [T] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Rotation by 180 degrees.
    pub fn rotate_180(&self) -> Self {
        Self::from_fn(self.height, self.width, self.channels, |y, x, c| {
            self.at(self.height - 1 - y, self.width - 1 - x, c)
        })
    }
}

impl<T: Scalar> Image<T> {
    pub fn from_u8(src: &Image<u8>) -> Self {
        src.map(|v| T::lit(v as f64 / 255.0))
    }

    pub fn to_u8(&self) -> Image<u8> {
        self.map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        self.map(|v| U::lit(v.as_f64()))
    }
}

/// Peak signal-to-noise ratio in dB over the pixels where `mask(y, x)` holds,
/// for images in `[0, peak]`.
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>, peak: f64, mask: impl Fn(usize, usize) -> bool) -> f64 {
    assert_eq!(a.dims(), b.dims());
    let (mut se, mut n) = (0.0, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            if !mask(y, x) {
                continue;
            }
            for (p, q) in a.pixel(y, x).iter().zip(b.pixel(y, x)) {
                let d = p.as_f64() - q.as_f64();
                se += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        return f64::NAN;
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotate_180_twice_is_identity() {
        let img = Image::from_fn(3, 5, 2, |y, x, c| (y * 10 + x * 2 + c) as u8);
        assert_eq!(img.rotate_180().rotate_180(), img);
        assert_eq!(img.rotate_180().pixel(0, 0), img.pixel(2, 4));
    }

    #[test]
    fn u8_roundtrip() {
        let img = Image::from_fn(2, 2, 3, |y, x, c| (y * 60 + x * 30 + c * 7) as u8);
        assert_eq!(Image::<f32>::from_u8(&img).to_u8(), img);
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let img = Image::<f64>::filled(4, 4, 1, 0.5);
        assert!(psnr(&img, &img, 1.0, |_, _| true).is_infinite());
        let other = Image::<f64>::filled(4, 4, 1, 0.6);
        assert!((psnr(&img, &other, 1.0, |_, _| true) - 20.0).abs() < 1e-9);
    }
}
