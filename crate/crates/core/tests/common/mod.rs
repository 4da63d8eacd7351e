#![allow(dead_code)]

use csda::Matrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.data())
}

/// Labels with `n_p` samples of class 1 first, the rest cycling over 2..=4.
pub fn labels(n: usize, n_p: usize) -> Vec<u32> {
    (0..n).map(|i| if i < n_p { 1 } else { 2 + (i % 3) as u32 }).collect()
}

/// Largest principal angle between the column spans, computed with nalgebra.
pub fn max_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let qu = u.clone().qr().q();
    let qv = v.clone().qr().q();
    let resid = &qv - &qu * (qu.transpose() * &qv);
    resid.singular_values().max().min(1.0).asin()
}

/// Eigenvectors of `(a, b)` with eigenvalue above `tol * max`, via explicit
/// Cholesky whitening.
pub fn nonzero_eigenspace(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let l = b.clone().cholesky().expect("SPD").l();
    let linv = l.try_inverse().expect("invertible");
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let top = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > tol * top)
        .collect();
    let v = DMatrix::from_fn(a.nrows(), keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    linv.transpose() * v
}
