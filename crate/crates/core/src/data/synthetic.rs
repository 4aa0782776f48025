//! Procedural datasets. Every sample is a pure function of `(seed, index)`.

use rand::Rng;

use super::Split;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{rng_for, Stream};

pub const SHAPE_NAMES: [&str; 3] = ["disc", "square", "triangle"];
pub const ARROW_NAMES: [&str; 2] = ["up", "down"];

const SIZE: usize = 32;
const KIND_SHAPES: u64 = 1;
const KIND_ARROWS: u64 = 2;
const KIND_NATURAL: u64 = 3;

fn check_n(n: usize) -> Result<()> {
    if n < 10 {
        return Err(Error::Data(format!("synthetic datasets need n >= 10, got {n}")));
    }
    Ok(())
}

fn rand_colour<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]
}

/// Grey pixel noise. Carries no per-image colour or texture.
fn background<R: Rng + ?Sized>(rng: &mut R) -> Vec<[f64; 3]> {
    (0..SIZE * SIZE)
        .map(|_| {
            let v = rng.gen_range(0.3..0.7);
            [v, v, v].map(|c: f64| c + rng.gen_range(-0.05..0.05))
        })
        .collect()
}

/// A colour visibly different from the local background.
fn contrasting<R: Rng + ?Sized>(rng: &mut R, bg: [f64; 3]) -> [f64; 3] {
    loop {
        let c = rand_colour(rng);
        let d: f64 = c.iter().zip(&bg).map(|(a, b)| (a - b).abs()).sum();
        if d > 0.6 {
            return c;
        }
    }
}

fn to_u8(px: &[[f64; 3]]) -> Image<u8> {
    let data = px.iter().flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)).collect();
    Image::from_vec(SIZE, SIZE, 3, data)
}

fn inside_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = |o: (f64, f64), u: (f64, f64), v: (f64, f64)| (u.0 - o.0) * (v.1 - o.1) - (u.1 - o.1) * (v.0 - o.0);
    let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

/// One shapes sample; the class is `index % 3`.
pub fn shape_image(seed: u64, index: usize) -> (Image<u8>, usize) {
    let label = index % 3;
    let mut rng = rng_for(seed, Stream::Synthetic, &[KIND_SHAPES, index as u64]);
    let mut px = background(&mut rng);
    let r = rng.gen_range(5.0..10.0);
    let cx = rng.gen_range(r..SIZE as f64 - 1.0 - r);
    let cy = rng.gen_range(r..SIZE as f64 - 1.0 - r);
    let colour = contrasting(&mut rng, [0.5; 3]);
    let tri = [(cx, cy - r), (cx + 0.866 * r, cy + 0.5 * r), (cx - 0.866 * r, cy + 0.5 * r)];
    for y in 0..SIZE {
        for x in 0..SIZE {
            let (fx, fy) = (x as f64, y as f64);
            let hit = match label {
                0 => (fx - cx).powi(2) + (fy - cy).powi(2) <= r * r,
                1 => (fx - cx).abs() <= 0.8 * r && (fy - cy).abs() <= 0.8 * r,
                _ => inside_triangle((fx, fy), tri[0], tri[1], tri[2]),
            };
            if hit {
                px[y * SIZE + x] = colour;
            }
        }
    }
    (to_u8(&px), label)
}

/// Upward arrow on a textured background. Class-1 samples are this image
/// rotated by 180 degrees.
pub fn arrow_base(seed: u64, index: usize) -> Image<u8> {
    let mut rng = rng_for(seed, Stream::Synthetic, &[KIND_ARROWS, index as u64]);
    let mut px = background(&mut rng);
    let len = rng.gen_range(14.0..22.0);
    let half_w = rng.gen_range(1.5..2.5);
    let head = rng.gen_range(4.0..6.0);
    let cx = rng.gen_range(head + 2.0..SIZE as f64 - 3.0 - head);
    let top = rng.gen_range(2.0..SIZE as f64 - 2.0 - len);
    let colour = contrasting(&mut rng, [0.5; 3]);
    for y in 0..SIZE {
        for x in 0..SIZE {
            let (fx, fy) = (x as f64, y as f64);
            let in_head = inside_triangle((fx, fy), (cx, top), (cx + head, top + head * 1.3), (cx - head, top + head * 1.3));
            let in_shaft = (fx - cx).abs() <= half_w && fy >= top + head && fy <= top + len;
            if in_head || in_shaft {
                px[y * SIZE + x] = colour;
            }
        }
    }
    to_u8(&px)
}

pub fn arrow_image(seed: u64, index: usize) -> (Image<u8>, usize) {
    let base = arrow_base(seed, index);
    let label = index % 2;
    (if label == 1 { base.rotate_180() } else { base }, label)
}

/// Three disc/square/triangle classes, balanced by construction.
pub fn synthetic_shapes(n: usize, seed: u64) -> Result<Split> {
    check_n(n)?;
    Ok((0..n).map(|i| shape_image(seed, i)).collect())
}

/// Two classes that differ only by orientation (arrow up / arrow down).
pub fn synthetic_arrows(n: usize, seed: u64) -> Result<Split> {
    check_n(n)?;
    Ok((0..n).map(|i| arrow_image(seed, i)).collect())
}

/// Smooth RGB image with an approximately 1/f amplitude spectrum, in [0, 1].
pub fn natural_like_image(height: usize, width: usize, seed: u64) -> Image<f64> {
    let mut rng = rng_for(seed, Stream::Synthetic, &[KIND_NATURAL]);
    let comps: Vec<(f64, f64, f64, [f64; 3])> = (0..48)
        .map(|_| {
            let f: f64 = rng.gen_range(1.0..8.0);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let ph = rng.gen_range(0.0..std::f64::consts::TAU);
            let mix = rand_colour(&mut rng).map(|m| (0.5 + m) / f);
            (f * theta.cos(), f * theta.sin(), ph, mix)
        })
        .collect();
    let mut raw = vec![0.0; height * width * 3];
    for y in 0..height {
        for x in 0..width {
            for (fx, fy, ph, mix) in &comps {
                let s = (std::f64::consts::TAU * (fx * x as f64 / width as f64 + fy * y as f64 / height as f64) + ph).sin();
                for c in 0..3 {
                    raw[(y * width + x) * 3 + c] += mix[c] * s;
                }
            }
        }
    }
    let (lo, hi) = raw.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-12);
    Image::from_vec(height, width, 3, raw.into_iter().map(|v| (v - lo) / span).collect())
}
