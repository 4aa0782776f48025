use super::linalg::solve_square;
use super::matrix::HomographyMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Image corners in the order top-left, top-right, bottom-right, bottom-left.
pub fn image_corners<T: Scalar>(width: usize, height: usize) -> [(T, T); 4] {
    let (z, w, h) = (T::zero(), T::lit(width as f64 - 1.0), T::lit(height as f64 - 1.0));
    [(z, z), (w, z), (w, h), (z, h)]
}

fn cross<T: Scalar>(a: (T, T), b: (T, T), c: (T, T)) -> T {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Homography taking the four image corners to the corners displaced by
/// `corner_shifts` (same corner order as [`image_corners`]).
///
/// Each shift component may be at most half the corresponding image
/// dimension; the displaced quad must stay convex and non-degenerate.
pub fn perspective_matrix<T: Scalar>(
    corner_shifts: &[(T, T); 4],
    width: usize,
    height: usize,
) -> Result<HomographyMatrix<T>> {
    if width < 2 || height < 2 {
        return Err(Error::Shape(format!("perspective needs at least 2x2 pixels, got {width}x{height}")));
    }
    let (half_w, half_h) = (width as f64 / 2.0, height as f64 / 2.0);
    for &(dx, dy) in corner_shifts {
        if !(dx.abs().as_f64() <= half_w) {
            return Err(Error::Range { field: "corner_shift_x", value: dx.as_f64(), min: -half_w, max: half_w });
        }
        if !(dy.abs().as_f64() <= half_h) {
            return Err(Error::Range { field: "corner_shift_y", value: dy.as_f64(), min: -half_h, max: half_h });
        }
    }
    let src = image_corners::<T>(width, height);
    let mut dst = src;
    for (d, s) in dst.iter_mut().zip(corner_shifts) {
        d.0 += s.0;
        d.1 += s.1;
    }

    // convex, consistently oriented, no three corners collinear
    let area_scale = T::lit((width * height) as f64);
    let orient = cross(src[0], src[1], src[2]).signum();
    for i in 0..4 {
        let c = cross(dst[i], dst[(i + 1) % 4], dst[(i + 2) % 4]);
        if !(c * orient > area_scale * T::lit(1e-9)) {
            return Err(Error::DegenerateQuad(format!(
                "corners {i}, {}, {} are collinear or folded",
                (i + 1) % 4,
                (i + 2) % 4
            )));
        }
    }

    let mut a = Vec::with_capacity(8);
    let mut b = Vec::with_capacity(8);
    let (z, o) = (T::zero(), T::one());
    for (&(x, y), &(u, v)) in src.iter().zip(&dst) {
        a.push(vec![x, y, o, z, z, z, -u * x, -u * y]);
        b.push(u);
        a.push(vec![z, z, z, x, y, o, -v * x, -v * y]);
        b.push(v);
    }
    let h = solve_square(a, b).map_err(|_| Error::DegenerateQuad("corner system is singular".into()))?;
    HomographyMatrix::from_rows([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], o]])
}
