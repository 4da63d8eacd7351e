//! Label encodings, class-mean centering and class-specific regression targets.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg::{qr_householder, Matrix};

/// One-vs-rest encoding of a label vector for a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassIndicator {
    pub class_id: u32,
    /// `true` where `labels[i] == class_id`.
    pub mask: Vec<bool>,
    pub positives: Vec<usize>,
    pub n: usize,
    pub n_p: usize,
    pub n_n: usize,
}

impl ClassIndicator {
    /// Binary vector with ones on the positive samples.
    pub fn e_i(&self) -> Vec<f64> {
        self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }

    /// Binary vector with ones on the negative samples.
    pub fn e_o(&self) -> Vec<f64> {
        self.mask.iter().map(|&m| if m { 0.0 } else { 1.0 }).collect()
    }

    /// Unit vector along the globally centered indicator `e_I - (N_p/N) e`.
    pub fn centered_indicator(&self) -> Vec<f64> {
        let frac = self.n_p as f64 / self.n as f64;
        let u: Vec<f64> = self
            .mask
            .iter()
            .map(|&m| if m { 1.0 - frac } else { -frac })
            .collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.into_iter().map(|v| v / norm).collect()
    }
}

pub fn encode_labels(labels: &[u32], p: u32) -> Result<ClassIndicator> {
    let mask: Vec<bool> = labels.iter().map(|&l| l == p).collect();
    let positives: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    let n = labels.len();
    let n_p = positives.len();
    let n_n = n - n_p;
    if n_p < 2 {
        return Err(Error::DegenerateClass {
            class: p,
            reason: format!("needs at least 2 positive samples, found {n_p}"),
        });
    }
    if n_n < 1 {
        return Err(Error::DegenerateClass {
            class: p,
            reason: "no negative samples".into(),
        });
    }
    Ok(ClassIndicator {
        class_id: p,
        mask,
        positives,
        n,
        n_p,
        n_n,
    })
}

/// Mean of the positive columns of `x`.
pub fn class_mean(x: &Matrix, ind: &ClassIndicator) -> Result<Vec<f64>> {
    if x.cols() != ind.n {
        return Err(Error::dim(format!(
            "{} samples but indicator covers {}",
            x.cols(),
            ind.n
        )));
    }
    let mut mean = vec![0.0; x.rows()];
    for &i in &ind.positives {
        for (m, v) in mean.iter_mut().zip(x.col(i)) {
            *m += v;
        }
    }
    let inv = 1.0 / ind.n_p as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    Ok(mean)
}

/// `X - (1/N_p) X e_I e^T`: every sample minus the positive-class mean.
pub fn center_to_class_mean(x: &Matrix, ind: &ClassIndicator) -> Result<Matrix> {
    let mean = class_mean(x, ind)?;
    Ok(x.sub_col_vector(&mean))
}

/// Orthonormal regression targets for one class, `d_p x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub t: Matrix,
    pub d_p: usize,
    pub seed: u64,
}

/// Builds the class-specific target rows.
///
/// A `2 x (d_p + 1)` uniform block is drawn from a ChaCha stream keyed by
/// `(seed, class_id)`. Every positive sample's row of `Z` copies the first
/// random row and every negative sample's row copies the second; the first
/// column of `Z` is then replaced by `e / sqrt(N)`. The targets are the
/// transposed thin-QR `Q` of `Z` without its first column.
///
/// The result has orthonormal rows, each orthogonal to the all-ones vector,
/// and its row space contains the centered class indicator.
pub fn compute_targets(ind: &ClassIndicator, d_p: usize, seed: u64) -> Result<TargetMatrix> {
    let n = ind.n;
    if d_p == 0 {
        return Err(Error::dim("subspace dimensionality must be at least 1"));
    }
    if d_p + 1 > n {
        return Err(Error::dim(format!(
            "class {}: d_p + 1 = {} exceeds the {n} training samples",
            ind.class_id,
            d_p + 1
        )));
    }
    if d_p > ind.n_p - 1 {
        warn!(
            "class {}: d_p = {d_p} exceeds N_p - 1 = {}; trailing directions carry no class information",
            ind.class_id,
            ind.n_p - 1
        );
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(ind.class_id));
    let width = d_p + 1;
    // column-major 2 x width block
    let block: Vec<f64> = (0..2 * width).map(|_| rng.random::<f64>()).collect();
    let pos_row = |c: usize| block[2 * c];
    let neg_row = |c: usize| block[2 * c + 1];

    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let z = Matrix::from_fn(n, width, |i, c| {
        if c == 0 {
            inv_sqrt_n
        } else if ind.mask[i] {
            pos_row(c)
        } else {
            neg_row(c)
        }
    });
    let q = qr_householder(&z)?.q;
    let t = q.col_range(1, width).transpose();
    Ok(TargetMatrix { t, d_p, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_first_class() {
        let ind = encode_labels(&[1, 1, 2, 3], 1).unwrap();
        assert_eq!(ind.e_i(), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!((ind.n_p, ind.n_n, ind.n), (2, 2, 4));
    }

    #[test]
    fn encode_absent_class_fails() {
        assert!(matches!(
            encode_labels(&[2, 2], 1),
            Err(Error::DegenerateClass { class: 1, .. })
        ));
    }

    #[test]
    fn encode_interleaved_class() {
        let ind = encode_labels(&[1, 2, 1, 2, 1], 2).unwrap();
        assert_eq!(ind.e_o(), vec![1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(ind.n_p, 2);
    }

    #[test]
    fn encode_without_negatives_fails() {
        assert!(encode_labels(&[4, 4, 4], 4).is_err());
    }

    #[test]
    fn centering_subtracts_positive_mean() {
        let x = Matrix::from_rows(&[&[1.0, 3.0], &[2.0, 4.0]]);
        let ind = ClassIndicator {
            class_id: 0,
            mask: vec![true, false],
            positives: vec![0],
            n: 2,
            n_p: 1,
            n_n: 1,
        };
        let c = center_to_class_mean(&x, &ind).unwrap();
        assert_eq!(c, Matrix::from_rows(&[&[0.0, 2.0], &[0.0, 2.0]]));
    }

    #[test]
    fn centering_all_positive_is_global_centering() {
        let x = Matrix::from_rows(&[&[1.0, 5.0, -3.0], &[0.5, 2.0, 9.0]]);
        let ind = ClassIndicator {
            class_id: 0,
            mask: vec![true; 3],
            positives: vec![0, 1, 2],
            n: 3,
            n_p: 3,
            n_n: 0,
        };
        let c = center_to_class_mean(&x, &ind).unwrap();
        for s in c.row_sums() {
            assert!(s.abs() < 1e-14);
        }
    }

    #[test]
    fn two_by_two_targets_by_hand() {
        // span{e, e_I} minus e leaves +-(1, 1, -1, -1) / 2
        let ind = encode_labels(&[7, 7, 8, 8], 7).unwrap();
        let t = compute_targets(&ind, 1, 5).unwrap().t;
        let s = t[(0, 0)].signum();
        for (j, expect) in [0.5, 0.5, -0.5, -0.5].iter().enumerate() {
            assert!((t[(0, j)] - s * expect).abs() < 1e-14, "{t:?}");
        }
    }

    #[test]
    fn too_many_target_rows() {
        let ind = encode_labels(&[1, 1, 2], 1).unwrap();
        assert!(matches!(compute_targets(&ind, 3, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn targets_are_deterministic_per_seed_and_class() {
        let labels = [1, 2, 1, 3, 2, 1, 3, 3, 2];
        let ind = encode_labels(&labels, 2).unwrap();
        let a = compute_targets(&ind, 3, 99).unwrap();
        let b = compute_targets(&ind, 3, 99).unwrap();
        assert_eq!(a, b);
    }
}
