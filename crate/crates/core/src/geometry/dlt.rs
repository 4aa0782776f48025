//! Direct Linear Transform homography estimation.
//!
//! Independent of the closed-form constructors: it only sees point
//! correspondences, which makes it the oracle the constructors are checked
//! against.

use super::linalg::jacobi_svd;
use super::matrix::HomographyMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Similarity transform moving the centroid to the origin with mean distance sqrt(2).
fn conditioning<T: Scalar>(pts: &[(T, T)]) -> Result<[[T; 3]; 3]> {
    let n = T::lit(pts.len() as f64);
    let cx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<T>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<T>()
        / n;
    if !(mean_dist > T::zero()) || !mean_dist.is_finite() {
        return Err(Error::RankDeficient("all points coincide".into()));
    }
    let s = T::lit(std::f64::consts::SQRT_2) / mean_dist;
    let (z, o) = (T::zero(), T::one());
    Ok([[s, z, -s * cx], [z, s, -s * cy], [z, z, o]])
}

fn apply_raw<T: Scalar>(m: &[[T; 3]; 3], p: (T, T)) -> (T, T) {
    (
        m[0][0] * p.0 + m[0][1] * p.1 + m[0][2],
        m[1][0] * p.0 + m[1][1] * p.1 + m[1][2],
    )
}

fn matmul<T: Scalar>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

/// Least-squares homography mapping `src[i]` to `dst[i]`, gauge-fixed so that
/// the bottom-right entry is one.
pub fn estimate_homography_dlt<T: Scalar>(src: &[(T, T)], dst: &[(T, T)]) -> Result<HomographyMatrix<T>> {
    if src.len() != dst.len() {
        return Err(Error::Shape(format!("{} source vs {} destination points", src.len(), dst.len())));
    }
    if src.len() < 4 {
        return Err(Error::RankDeficient(format!("need at least 4 correspondences, got {}", src.len())));
    }
    let ts = conditioning(src)?;
    let td = conditioning(dst)?;

    let rows = 2 * src.len();
    let mut a = Vec::with_capacity(rows * 9);
    let (z, o) = (T::zero(), T::one());
    for (&s, &d) in src.iter().zip(dst) {
        let (x, y) = apply_raw(&ts, s);
        let (u, v) = apply_raw(&td, d);
        a.extend_from_slice(&[-x, -y, -o, z, z, z, u * x, u * y, u]);
        a.extend_from_slice(&[z, z, z, -x, -y, -o, v * x, v * y, v]);
    }
    let (sigma, vecs) = jacobi_svd(&a, rows, 9);

    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| sigma[i].partial_cmp(&sigma[j]).unwrap_or(std::cmp::Ordering::Equal));
    let largest = sigma[order[8]];
    if !(sigma[order[1]] > largest * T::lit(1e-9)) {
        return Err(Error::RankDeficient("correspondences do not determine a unique homography".into()));
    }
    let k = order[0];
    let mut hn = [[T::zero(); 3]; 3];
    for i in 0..9 {
        hn[i / 3][i % 3] = vecs[i * 9 + k];
    }

    // undo conditioning: H = Td^-1 * Hn * Ts
    let s = td[0][0];
    let td_inv = [[o / s, z, -td[0][2] / s], [z, o / s, -td[1][2] / s], [z, z, o]];
    let h = matmul(&td_inv, &matmul(&hn, &ts));
    let scale = h.iter().flatten().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if h[2][2].abs() <= scale * T::lit(1e-12) {
        return Err(Error::Gauge);
    }
    HomographyMatrix::from_rows(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_to_itself_is_identity() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let h = estimate_homography_dlt(&sq, &sq).unwrap();
        assert!(h.max_abs_diff(&HomographyMatrix::identity()) < 1e-12);
    }

    #[test]
    fn recovers_known_perspective_from_four_and_more_points() {
        let truth = HomographyMatrix::from_rows([[1.2, 0.15, -3.0], [-0.1, 0.85, 4.5], [0.006, -0.004, 1.0]]).unwrap();
        let src = [(0.0, 0.0), (31.0, 0.0), (31.0, 31.0), (0.0, 31.0), (12.0, 7.0), (20.0, 25.0)];
        let dst: Vec<_> = src.iter().map(|&(x, y)| truth.apply_to_point(x, y).unwrap()).collect();
        let four = estimate_homography_dlt(&src[..4], &dst[..4]).unwrap();
        let six = estimate_homography_dlt(&src, &dst).unwrap();
        assert!(four.max_abs_diff(&truth) < 1e-8);
        assert!(six.max_abs_diff(&truth) < 1e-8);
    }

    #[test]
    fn collinear_configuration_is_rank_deficient() {
        let src = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 1.0)];
        assert!(matches!(estimate_homography_dlt(&src, &src), Err(Error::RankDeficient(_))));
        assert!(estimate_homography_dlt(&src[..3], &src[..3]).is_err());
    }
}
