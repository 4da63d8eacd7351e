use std::f64::consts::FRAC_PI_2;

use super::eigen::singular_values;
use super::matrix::Matrix;
use super::qr::qr_householder;
use crate::error::{Error, Result};

/// Principal angles between `span(u)` and `span(v)`, ascending in `[0, pi/2]`.
///
/// Cosines come from the singular values of `Qu^T Qv`, sines from the
/// residual `Qv - Qu Qu^T Qv`; each angle is taken from whichever of the two
/// is better conditioned so that angles near zero keep full precision.
pub fn principal_angles(u: &Matrix, v: &Matrix) -> Result<Vec<f64>> {
    if u.rows() != v.rows() {
        return Err(Error::dim(format!(
            "subspaces live in R^{} and R^{}",
            u.rows(),
            v.rows()
        )));
    }
    let qu = orthonormal_basis(u)?;
    let qv = orthonormal_basis(v)?;
    // `wide` spans the larger subspace
    let (wide, narrow) = if qu.cols() >= qv.cols() { (qu, qv) } else { (qv, qu) };

    let cross = wide.t_matmul(&narrow);
    let cosines = singular_values(&cross)?;
    let residual = narrow.sub(&wide.matmul(&cross));
    let mut sines = singular_values(&residual)?;
    sines.reverse();

    let mut angles: Vec<f64> = cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| {
            if c * c < 0.5 {
                c.min(1.0).acos()
            } else {
                s.min(1.0).asin()
            }
        })
        .map(|a| a.clamp(0.0, FRAC_PI_2))
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

fn orthonormal_basis(m: &Matrix) -> Result<Matrix> {
    if m.cols() == 0 || m.cols() > m.rows() {
        return Err(Error::RankDeficient(format!(
            "{}x{} cannot have full column rank",
            m.rows(),
            m.cols()
        )));
    }
    let f = qr_householder(m)?;
    let scale = f.r.max_abs();
    for j in 0..m.cols() {
        if f.r[(j, j)].abs() <= 1e-12 * scale || scale == 0.0 {
            return Err(Error::RankDeficient(format!("column {j} is linearly dependent")));
        }
    }
    Ok(f.q)
}
