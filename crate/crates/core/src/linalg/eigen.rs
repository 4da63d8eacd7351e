use log::warn;

use super::cholesky::{check_symmetric, Cholesky};
use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenpairs sorted by descending eigenvalue; `vectors` holds one
/// eigenvector per column.
#[derive(Debug, Clone)]
pub struct EigPair {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(a: &Matrix) -> Result<EigPair> {
    check_symmetric(a, "sym_eig input")?;
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);

    let scale = m.frobenius();
    let mut sweep = 0;
    while n >= 2 && scale > 0.0 && sweep <= MAX_SWEEPS {
        let mut off = 0.0;
        for q in 1..n {
            for p in 0..q {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        if sweep == MAX_SWEEPS {
            return Err(Error::Convergence(MAX_SWEEPS));
        }
        sweep += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                if sweep > 4 && apq.abs() <= 1e-18 * (app.abs() + aqq.abs()) {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, p, q, c, s);
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = v.select_cols(&order);
    Ok(EigPair { values, vectors })
}

/// Applies the Jacobi rotation to the off-diagonal entries of rows/cols p, q.
fn rotate(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        m[(k, p)] = new_p;
        m[(p, k)] = new_p;
        m[(k, q)] = new_q;
        m[(q, k)] = new_q;
    }
}

/// Top-`k` pairs of `a w = lambda (b + ridge I) w`, `lambda` descending.
///
/// `b` is whitened by its Cholesky factor. When the factorization fails the
/// ridge is raised by `1e-10 * trace(b) / d` once before giving up.
/// Returned vectors are `(b + ridge I)`-orthonormal.
pub fn gen_eig_sym(a: &Matrix, b: &Matrix, k: usize, ridge: f64) -> Result<EigPair> {
    check_symmetric(a, "gen_eig_sym left matrix")?;
    check_symmetric(b, "gen_eig_sym right matrix")?;
    let d = a.rows();
    if b.rows() != d {
        return Err(Error::dim(format!("pencil sizes differ: {d} vs {}", b.rows())));
    }
    if k > d {
        return Err(Error::dim(format!("requested {k} eigenpairs of a {d}x{d} pencil")));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {ridge}")));
    }
    let mut reg = b.clone();
    reg.add_diag(ridge);
    let chol = match Cholesky::factor(&reg) {
        Ok(c) => c,
        Err(Error::NotPositiveDefinite { .. }) => {
            let eps = 1e-10 * reg.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
            warn!("right-hand matrix is singular; adding fallback ridge {eps:e}");
            reg.add_diag(eps);
            Cholesky::factor(&reg)?
        }
        Err(e) => return Err(e),
    };

    // C = L^{-1} A L^{-T}
    let left = chol.solve_lower(a);
    let mut c = chol.solve_lower(&left.transpose());
    for j in 0..d {
        for i in (j + 1)..d {
            let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = avg;
            c[(j, i)] = avg;
        }
    }
    let eig = sym_eig(&c)?;
    let top: Vec<usize> = (0..k).collect();
    let vectors = chol.solve_upper(&eig.vectors.select_cols(&top));
    Ok(EigPair {
        values: eig.values[..k].to_vec(),
        vectors,
    })
}

/// Singular values of `a` in descending order (one-sided Jacobi).
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    let mut u = if a.rows() >= a.cols() {
        a.clone()
    } else {
        a.transpose()
    };
    let n = u.cols();
    for sweep in 0.. {
        if sweep == MAX_SWEEPS {
            return Err(Error::Convergence(MAX_SWEEPS));
        }
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let alpha = dot(u.col(p), u.col(p));
                let beta = dot(u.col(q), u.col(q));
                let gamma = dot(u.col(p), u.col(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.rows() {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| dot(u.col(j), u.col(j)).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pencil_has_unit_eigenvalues() {
        let e = gen_eig_sym(&Matrix::identity(3), &Matrix::identity(3), 3, 0.0).unwrap();
        for v in e.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn standard_problem_with_identity_metric() {
        let e = gen_eig_sym(&Matrix::from_diag(&[4.0, 1.0]), &Matrix::identity(2), 2, 0.0).unwrap();
        assert!((e.values[0] - 4.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        assert!((e.vectors[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((e.vectors[(1, 1)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_pencil_by_hand() {
        // 2w = l*1*w and 6w = l*3*w: both ratios equal 2
        let e = gen_eig_sym(&Matrix::from_diag(&[2.0, 6.0]), &Matrix::from_diag(&[1.0, 3.0]), 2, 0.0)
            .unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-14);
        assert!((e.values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn vectors_are_b_orthonormal() {
        let a = Matrix::from_rows(&[&[2.0, 1.0, 0.0], &[1.0, 3.0, 0.5], &[0.0, 0.5, 1.0]]);
        let b = Matrix::from_rows(&[&[4.0, 1.0, 0.0], &[1.0, 2.0, 0.0], &[0.0, 0.0, 1.0]]);
        let e = gen_eig_sym(&a, &b, 3, 0.0).unwrap();
        let g = e.vectors.t_matmul(&b.matmul(&e.vectors));
        assert!(g.max_abs_diff(&Matrix::identity(3)) < 1e-12);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn singular_metric_uses_fallback_ridge() {
        let b = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let e = gen_eig_sym(&Matrix::identity(2), &b, 1, 0.0).unwrap();
        assert!(e.values[0].is_finite());
    }

    #[test]
    fn too_many_pairs_requested() {
        assert!(gen_eig_sym(&Matrix::identity(2), &Matrix::identity(2), 3, 0.0).is_err());
    }

    #[test]
    fn singular_values_of_known_matrix() {
        // diag(3, 2) padded with a zero row
        let a = Matrix::from_rows(&[&[0.0, 2.0], &[3.0, 0.0], &[0.0, 0.0]]);
        let sv = singular_values(&a).unwrap();
        assert!((sv[0] - 3.0).abs() < 1e-15 && (sv[1] - 2.0).abs() < 1e-15);
    }
}
