use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 3x3 projective matrix in the normalized gauge, i.e. with the bottom-right
/// entry fixed to one. Row-major; acts on column vectors `(x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomographyMatrix<T> {
    m: [[T; 3]; 3],
}

/// Relative size of `det` under which a matrix is treated as singular.
const SINGULAR_EPS: f64 = 1e-12;

impl<T: Scalar> HomographyMatrix<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    /// Builds a matrix from arbitrary entries, rescaling so that `m[2][2] == 1`.
    pub fn from_rows(rows: [[T; 3]; 3]) -> Result<Self> {
        let w = rows[2][2];
        if w == T::zero() || !w.is_finite() {
            return Err(Error::Gauge);
        }
        let mut m = rows;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = *v / w;
            }
        }
        m[2][2] = T::one();
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Gauge);
        }
        Ok(Self { m })
    }

    pub fn translation(tx: T, ty: T) -> Self {
        let mut h = Self::identity();
        h.m[0][2] = tx;
        h.m[1][2] = ty;
        h
    }

    pub fn rows(&self) -> &[[T; 3]; 3] {
        &self.m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.m[r][c]
    }

    pub fn is_affine(&self) -> bool {
        self.m[2][0] == T::zero() && self.m[2][1] == T::zero()
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    fn check_invertible(&self) -> Result<()> {
        let det = self.det();
        let scale = self
            .m
            .iter()
            .flatten()
            .fold(T::zero(), |acc, v| acc.max(v.abs()));
        if !det.is_finite() || det.abs() <= T::lit(SINGULAR_EPS) * scale * scale * scale {
            return Err(Error::Singular(det.as_f64()));
        }
        Ok(())
    }

    /// Matrix for "apply `b`, then `self`".
    pub fn compose(&self, b: &Self) -> Result<Self> {
        let (a, b) = (&self.m, &b.m);
        let mut out = [[T::zero(); 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
            }
        }
        Self::from_rows(out)
    }

    /// Inverse via the adjugate, re-normalized into the gauge.
    pub fn invert(&self) -> Result<Self> {
        self.check_invertible()?;
        let m = &self.m;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        // adj(M)[r][c] = cofactor(c, r)
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        Self::from_rows(adj)
    }

    /// Maps a pixel through the matrix in homogeneous coordinates.
    pub fn apply_to_point(&self, x: T, y: T) -> Result<(T, T)> {
        let m = &self.m;
        let u = m[0][0] * x + m[0][1] * y + m[0][2];
        let v = m[1][0] * x + m[1][1] * y + m[1][2];
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        if w == T::zero() || !w.is_finite() {
            return Err(Error::PointAtInfinity);
        }
        Ok((u / w, v / w))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
    }

    pub fn cast<U: Scalar>(&self) -> HomographyMatrix<U> {
        let mut m = [[U::zero(); 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = U::lit(self.m[r][c].as_f64());
            }
        }
        HomographyMatrix { m }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type H = HomographyMatrix<f64>;

    fn sample() -> H {
        H::from_rows([[1.1, 0.2, 3.0], [-0.1, 0.9, -2.0], [0.001, -0.002, 1.0]]).unwrap()
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let h = sample();
        let prod = h.compose(&h.invert().unwrap()).unwrap();
        assert!(prod.max_abs_diff(&H::identity()) < 1e-9);
        let prod = h.invert().unwrap().compose(&h).unwrap();
        assert!(prod.max_abs_diff(&H::identity()) < 1e-9);
    }

    #[test]
    fn identity_is_two_sided_unit() {
        let h = sample();
        assert_eq!(H::identity().compose(&h).unwrap(), h);
        assert_eq!(h.compose(&H::identity()).unwrap(), h);
        assert_eq!(H::identity().invert().unwrap(), H::identity());
    }

    #[test]
    fn translations_add() {
        let a = H::translation(2.0, -1.0);
        let b = H::translation(0.5, 4.0);
        assert_eq!(a.compose(&b).unwrap(), H::translation(2.5, 3.0));
        assert_eq!(a.invert().unwrap(), H::translation(-2.0, 1.0));
    }

    #[test]
    fn apply_matches_homogeneous_arithmetic() {
        assert_eq!(H::identity().apply_to_point(5.0, 7.0).unwrap(), (5.0, 7.0));
        assert_eq!(H::translation(2.0, 3.0).apply_to_point(0.0, 0.0).unwrap(), (2.0, 3.0));
        let h = sample();
        let m = h.rows();
        let (x, y) = (3.5, -1.25);
        let w = m[2][0] * x + m[2][1] * y + 1.0;
        let expect = (
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        );
        let got = h.apply_to_point(x, y).unwrap();
        assert!((got.0 - expect.0).abs() < 1e-12 && (got.1 - expect.1).abs() < 1e-12);
    }

    #[test]
    fn singular_and_infinite_cases() {
        let s = H::from_rows([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(s.invert(), Err(Error::Singular(_))));
        assert!(matches!(
            H::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]),
            Err(Error::Gauge)
        ));
        let p = H::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(p.apply_to_point(-1.0, 0.0), Err(Error::PointAtInfinity)));
    }

    #[test]
    fn compose_is_associative() {
        let a = sample();
        let b = H::translation(1.0, 2.0);
        let c = H::from_rows([[0.8, -0.3, 1.0], [0.3, 0.8, 0.0], [0.0, 0.003, 1.0]]).unwrap();
        let left = a.compose(&b).unwrap().compose(&c).unwrap();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap();
        assert!(left.max_abs_diff(&right) < 1e-9);
    }
}
