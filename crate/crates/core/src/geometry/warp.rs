use serde::{Deserialize, Serialize};

use super::matrix::HomographyMatrix;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

/// Inverse-mapping warp: output pixel `p` samples the source at `h^-1 p`.
/// Samples falling outside the source take `fill` in every channel.
pub fn warp_image<T: Scalar, G: Scalar>(
    img: &Image<T>,
    h: &HomographyMatrix<G>,
    interp: Interpolation,
    fill: T,
) -> Result<Image<T>> {
    if img.is_empty() {
        return Err(Error::Shape("cannot warp an empty image".into()));
    }
    let inv = h.invert()?;
    let (w, hgt, ch) = (img.width(), img.height(), img.channels());
    let mut out = Image::filled(hgt, w, ch, fill);
    let in_x = |x: i64| x >= 0 && (x as usize) < w;
    let in_y = |y: i64| y >= 0 && (y as usize) < hgt;
    let mut acc = vec![T::zero(); ch];

    for y in 0..hgt {
        for x in 0..w {
            let Ok((sx, sy)) = inv.apply_to_point(G::lit(x as f64), G::lit(y as f64)) else {
                continue;
            };
            let (sx, sy) = (sx.as_f64(), sy.as_f64());
            if !(sx.is_finite() && sy.is_finite()) {
                continue;
            }
            match interp {
                Interpolation::Nearest => {
                    let (ix, iy) = ((sx + 0.5).floor() as i64, (sy + 0.5).floor() as i64);
                    if in_x(ix) && in_y(iy) {
                        out.pixel_mut(y, x).copy_from_slice(img.pixel(iy as usize, ix as usize));
                    }
                }
                Interpolation::Bilinear => {
                    let (x0, y0) = (sx.floor(), sy.floor());
                    if x0 < -1.0 || y0 < -1.0 || x0 >= w as f64 || y0 >= hgt as f64 {
                        continue;
                    }
                    let (fx, fy) = (sx - x0, sy - y0);
                    let (x0, y0) = (x0 as i64, y0 as i64);
                    acc.iter_mut().for_each(|a| *a = T::zero());
                    let taps = [
                        (x0, y0, (1.0 - fx) * (1.0 - fy)),
                        (x0 + 1, y0, fx * (1.0 - fy)),
                        (x0, y0 + 1, (1.0 - fx) * fy),
                        (x0 + 1, y0 + 1, fx * fy),
                    ];
                    for (tx, ty, wt) in taps {
                        if wt == 0.0 {
                            continue;
                        }
                        let wt = T::lit(wt);
                        if in_x(tx) && in_y(ty) {
                            for (a, &v) in acc.iter_mut().zip(img.pixel(ty as usize, tx as usize)) {
                                *a += wt * v;
                            }
                        } else {
                            for a in acc.iter_mut() {
                                *a += wt * fill;
                            }
                        }
                    }
                    out.pixel_mut(y, x).copy_from_slice(&acc);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Image<f32> {
        Image::from_fn(8, 8, 3, |y, x, c| (y * 8 + x) as f32 / 64.0 + c as f32 * 0.01)
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = ramp();
        let id = HomographyMatrix::<f64>::identity();
        assert_eq!(warp_image(&img, &id, Interpolation::Nearest, 0.0).unwrap(), img);
        let b = warp_image(&img, &id, Interpolation::Bilinear, 0.0).unwrap();
        assert!(img.max_abs_diff(&b) < 1e-6);
    }

    #[test]
    fn integer_translation_is_a_pixel_shift() {
        let img = ramp();
        let t = HomographyMatrix::<f64>::translation(3.0, 0.0);
        let out = warp_image(&img, &t, Interpolation::Nearest, -1.0).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                if x >= 3 {
                    assert_eq!(out.pixel(y, x), img.pixel(y, x - 3));
                } else {
                    assert!(out.pixel(y, x).iter().all(|&v| v == -1.0));
                }
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let s = HomographyMatrix::<f64>::from_rows([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(warp_image(&ramp(), &s, Interpolation::Bilinear, 0.0), Err(Error::Singular(_))));
    }
}
