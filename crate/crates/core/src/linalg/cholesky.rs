use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Lower Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factors a symmetric positive definite matrix. Only the lower triangle
    /// of `a` is read.
    ///
    /// A pivot below `n * eps * max(diag)` is treated as a failure so that
    /// numerically singular matrices are reported instead of producing
    /// garbage solutions.
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::dim(format!("cholesky needs a square matrix, got {:?}", a.shape())));
        }
        let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
        let floor = n as f64 * f64::EPSILON * max_diag;

        // row-oriented storage of L so each dot product is contiguous
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = vec![0.0; i + 1];
            for j in 0..i {
                let s = a[(i, j)] - dot(&row[..j], &rows[j][..j]);
                row[j] = s / rows[j][j];
            }
            let s = a[(i, i)] - dot(&row[..i], &row[..i]);
            if !(s > floor) || !s.is_finite() {
                return Err(Error::NotPositiveDefinite { index: i, pivot: s });
            }
            row[i] = s.sqrt();
            rows.push(row);
        }
        let l = Matrix::from_fn(n, n, |i, j| if j <= i { rows[i][j] } else { 0.0 });
        Ok(Self { l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L y = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for j in 0..n {
            let v = b[j] / self.l[(j, j)];
            b[j] = v;
            let col = self.l.col(j);
            for i in (j + 1)..n {
                b[i] -= col[i] * v;
            }
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let col = self.l.col(i);
            let s = dot(&col[i + 1..], &b[i + 1..]);
            b[i] = (b[i] - s) / col[i];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    pub fn solve(&self, b: &Matrix) -> Matrix {
        assert_eq!(b.rows(), self.dim(), "cholesky solve dimension");
        let mut x = b.clone();
        for j in 0..x.cols() {
            let col = x.col_mut(j);
            self.forward_in_place(col);
            self.backward_in_place(col);
        }
        x
    }

    /// `L^{-1} B`.
    pub fn solve_lower(&self, b: &Matrix) -> Matrix {
        let mut x = b.clone();
        for j in 0..x.cols() {
            self.forward_in_place(x.col_mut(j));
        }
        x
    }

    /// `L^{-T} B`.
    pub fn solve_upper(&self, b: &Matrix) -> Matrix {
        let mut x = b.clone();
        for j in 0..x.cols() {
            self.backward_in_place(x.col_mut(j));
        }
        x
    }
}

pub(crate) fn check_symmetric(a: &Matrix, what: &str) -> Result<()> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim(format!("{what} must be square, got {:?}", a.shape())));
    }
    let tol = 1e-10 * a.max_abs().max(1.0);
    for j in 0..n {
        for i in (j + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Solves `(a + ridge I) x = b` for symmetric `a` via Cholesky.
pub fn solve_spd(a: &Matrix, b: &Matrix, ridge: f64) -> Result<Matrix> {
    check_symmetric(a, "solve_spd matrix")?;
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {ridge}")));
    }
    if b.rows() != a.rows() {
        return Err(Error::dim(format!(
            "right-hand side has {} rows, system has {}",
            b.rows(),
            a.rows()
        )));
    }
    let mut reg = a.clone();
    reg.add_diag(ridge);
    let chol = Cholesky::factor(&reg)?;
    Ok(chol.solve(b))
}
