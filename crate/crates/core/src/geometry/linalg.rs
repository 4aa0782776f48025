//! Small dense solvers used by the matrix constructors and the DLT oracle.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. `a` is row-major `n x n`.
pub fn solve_square<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("solve_square expects an n x n system".into()));
    }
    let scale = a
        .iter()
        .flatten()
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tiny = scale * T::lit(1e-13);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty range");
        if !(a[pivot][col].abs() > tiny) {
            return Err(Error::Singular(a[pivot][col].as_f64()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// One-sided Jacobi SVD of a row-major `rows x cols` matrix.
///
/// Returns the singular values (unsorted, one per column) and the right
/// singular vectors as columns of a row-major `cols x cols` matrix.
pub fn jacobi_svd<T: Scalar>(a: &[T], rows: usize, cols: usize) -> (Vec<T>, Vec<T>) {
    assert_eq!(a.len(), rows * cols);
    let mut u = a.to_vec();
    let mut v = vec![T::zero(); cols * cols];
    for i in 0..cols {
        v[i * cols + i] = T::one();
    }
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for r in 0..rows {
                    let (up, uq) = (u[r * cols + p], u[r * cols + q]);
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (up, uq) = (u[r * cols + p], u[r * cols + q]);
                    u[r * cols + p] = c * up - s * uq;
                    u[r * cols + q] = s * up + c * uq;
                }
                for r in 0..cols {
                    let (vp, vq) = (v[r * cols + p], v[r * cols + q]);
                    v[r * cols + p] = c * vp - s * vq;
                    v[r * cols + q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = (0..cols)
        .map(|c| (0..rows).map(|r| u[r * cols + c] * u[r * cols + c]).sum::<T>().sqrt())
        .collect();
    (sigma, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a: Vec<Vec<f64>> = vec![vec![2.0, 1.0, -1.0], vec![-3.0, -1.0, 2.0], vec![-2.0, 1.0, 2.0]];
        let x = solve_square(a, vec![8.0, -11.0, -3.0]).unwrap();
        for (got, want) in x.iter().zip([2.0, 3.0, -1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let singular = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_square(singular, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn svd_finds_null_vector() {
        // rank-2 3x3: third column = first + second
        let a: [f64; 9] = [1.0, 2.0, 3.0, 4.0, 5.0, 9.0, -1.0, 0.5, -0.5];
        let (s, v) = jacobi_svd(&a, 3, 3);
        let k = (0..3).min_by(|&i, &j| s[i].partial_cmp(&s[j]).unwrap()).unwrap();
        assert!(s[k] < 1e-12);
        let n: [f64; 3] = [v[k], v[3 + k], v[6 + k]];
        // null space is spanned by (1, 1, -1)
        assert!((n[0] - n[1]).abs() < 1e-12 && (n[0] + n[2]).abs() < 1e-12);
        for r in 0..3 {
            let dot: f64 = (0..3).map(|c| a[r * 3 + c] * n[c]).sum();
            assert!(dot.abs() < 1e-12);
        }
    }
}
