//! Dense linear algebra used by the solvers and their oracles.

mod angles;
mod cholesky;
mod eigen;
mod kmeans;
mod matrix;
mod qr;

pub use angles::principal_angles;
pub use cholesky::{solve_spd, Cholesky};
pub use eigen::{gen_eig_sym, singular_values, sym_eig, EigPair};
pub use kmeans::{kmeans, kmeans_fit, KMeansFit, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use matrix::{axpy, dot, norm2, Matrix};
pub use qr::{qr_householder, QrFactors};
