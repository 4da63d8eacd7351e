use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};

/// Thin QR factors of an `n x k` matrix.
#[derive(Debug, Clone)]
pub struct QrFactors {
    /// `n x k`, orthonormal columns.
    pub q: Matrix,
    /// `k x k`, upper triangular with a non-negative diagonal.
    pub r: Matrix,
}

/// Householder QR with the sign convention `diag(R) >= 0`.
///
/// Rank-deficient inputs still yield orthonormal `Q`: a column that vanishes
/// after the previous reflections gets the identity reflector, so its `Q`
/// column is the image of a unit basis vector under the earlier reflections.
pub fn qr_householder(m: &Matrix) -> Result<QrFactors> {
    let (n, k) = m.shape();
    if k > n {
        return Err(Error::dim(format!("qr needs rows >= cols, got {n}x{k}")));
    }
    let mut work = m.clone();
    // unit Householder vectors, v_j lives in rows j..n
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(k);

    for j in 0..k {
        let x = &work.col(j)[j..];
        let norm = dot(x, x).sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm = dot(&v, &v).sqrt();
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        v.iter_mut().for_each(|e| *e /= vnorm);
        for c in j..k {
            let col = &mut work.col_mut(c)[j..];
            let s = 2.0 * dot(&v, col);
            axpy(-s, &v, col);
        }
        // the reflected column is alpha * e_1 up to rounding; pin it exactly
        let col = work.col_mut(j);
        col[j] = alpha;
        col[j + 1..].iter_mut().for_each(|e| *e = 0.0);
        reflectors.push(Some(v));
    }

    let mut r = Matrix::zeros(k, k);
    for j in 0..k {
        for i in 0..=j {
            r[(i, j)] = work[(i, j)];
        }
    }

    // Q = H_0 H_1 ... H_{k-1} [I_k; 0]
    let mut q = Matrix::zeros(n, k);
    for j in 0..k {
        q[(j, j)] = 1.0;
    }
    for (j, refl) in reflectors.iter().enumerate().rev() {
        let Some(v) = refl else { continue };
        for c in 0..k {
            let col = &mut q.col_mut(c)[j..];
            let s = 2.0 * dot(v, col);
            if s != 0.0 {
                axpy(-s, v, col);
            }
        }
    }

    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for c in j..k {
                r[(j, c)] = -r[(j, c)];
            }
            q.col_mut(j).iter_mut().for_each(|e| *e = -*e);
        }
    }

    Ok(QrFactors { q, r })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_error(q: &Matrix) -> f64 {
        q.t_matmul(q).max_abs_diff(&Matrix::identity(q.cols()))
    }

    #[test]
    fn identity_factors_to_identity() {
        let f = qr_householder(&Matrix::identity(3)).unwrap();
        assert!(f.q.max_abs_diff(&Matrix::identity(3)) < 1e-15);
        assert!(f.r.max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn rank_one_columns_give_zero_pivot() {
        let m = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let f = qr_householder(&m).unwrap();
        assert!(orthonormality_error(&f.q) < 1e-12);
        assert!(f.r[(1, 1)].abs() < 1e-12);
        assert!((f.r[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(f.q.matmul(&f.r).max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn single_column_by_hand() {
        // Gram-Schmidt by hand: ||(3,4)|| = 5, q = (0.6, 0.8)
        let f = qr_householder(&Matrix::from_rows(&[&[3.0], &[4.0]])).unwrap();
        assert!((f.q[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((f.q[(1, 0)] - 0.8).abs() < 1e-15);
        assert!((f.r[(0, 0)] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn wide_input_is_rejected() {
        assert!(matches!(
            qr_householder(&Matrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_matrix_still_orthonormal() {
        let f = qr_householder(&Matrix::zeros(5, 3)).unwrap();
        assert!(orthonormality_error(&f.q) < 1e-15);
        assert_eq!(f.r.max_abs(), 0.0);
    }
}
