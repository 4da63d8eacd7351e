//! Reduced-kernel class-specific regression.
//!
//! The projection in feature space is a combination of `K` reference vectors,
//! so fitting only needs the `K x N` kernel matrix between references and
//! training samples. Choosing every training sample as a reference gives the
//! full-kernel model.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kmeans, Matrix, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::linear::{centered_regression, SharedCenteredSolver};
use crate::parallel::map_ordered;
use crate::targets::{compute_targets, encode_labels, ClassIndicator, TargetMatrix};

/// Test points are processed in blocks of this many columns.
const KERNEL_BLOCK: usize = 4096;
/// Upper bound on points used by the bandwidth heuristic.
const SIGMA_SUBSAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefMethod {
    Kmeans,
    RandomSubset,
    AllTraining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "default_kind")]
    pub kind: KernelKind,
    /// RBF bandwidth; `None` selects the median pairwise distance.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_ref_count")]
    pub ref_count: usize,
    #[serde(default = "default_ref_method")]
    pub ref_method: RefMethod,
    #[serde(default)]
    pub seed: u64,
}

fn default_kind() -> KernelKind {
    KernelKind::Rbf
}

fn default_ref_count() -> usize {
    500
}

fn default_ref_method() -> RefMethod {
    RefMethod::Kmeans
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            sigma: None,
            ref_count: default_ref_count(),
            ref_method: default_ref_method(),
            seed: 0,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidArgument(format!("sigma must be positive, got {s}")));
            }
        }
        if self.ref_count == 0 && self.ref_method != RefMethod::AllTraining {
            return Err(Error::InvalidArgument("ref_count must be at least 1".into()));
        }
        Ok(())
    }

    /// Fixes the bandwidth, running the median heuristic on `x` if needed.
    pub fn resolve(&self, x: &Matrix) -> Result<Kernel> {
        self.validate()?;
        let sigma = match (self.kind, self.sigma) {
            (KernelKind::Linear, _) => 1.0,
            (KernelKind::Rbf, Some(s)) => s,
            (KernelKind::Rbf, None) => median_pairwise_distance(x, self.seed)?,
        };
        Ok(Kernel {
            kind: self.kind,
            sigma,
        })
    }
}

/// A kernel function with its bandwidth resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub sigma: f64,
}

impl Kernel {
    pub fn rbf(sigma: f64) -> Self {
        Self {
            kind: KernelKind::Rbf,
            sigma,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            sigma: 1.0,
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => crate::linalg::dot(a, b),
            KernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * self.sigma * self.sigma)).exp()
            }
        }
    }
}

/// Median of pairwise Euclidean distances over a seeded subsample.
pub fn median_pairwise_distance(x: &Matrix, seed: u64) -> Result<f64> {
    let n = x.cols();
    if n < 2 {
        return Err(Error::EmptyInput("bandwidth heuristic needs at least two points"));
    }
    let m = n.min(SIGMA_SUBSAMPLE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d2: f64 = x.col(i).iter().zip(x.col(j)).map(|(p, q)| (p - q) * (p - q)).sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    Ok(if median > 0.0 && median.is_finite() { median } else { 1.0 })
}

/// `K x M` matrix of kernel values between references and points.
pub fn kernel_matrix(refs: &Matrix, x: &Matrix, kernel: &Kernel) -> Result<Matrix> {
    if refs.rows() != x.rows() {
        return Err(Error::dim(format!(
            "references are {}-dimensional, points {}-dimensional",
            refs.rows(),
            x.rows()
        )));
    }
    let k = refs.cols();
    let mut out = Matrix::zeros(k, x.cols());
    for start in (0..x.cols()).step_by(KERNEL_BLOCK) {
        let end = (start + KERNEL_BLOCK).min(x.cols());
        for j in start..end {
            let xj = x.col(j);
            let col = out.col_mut(j);
            for (i, v) in col.iter_mut().enumerate() {
                *v = kernel.eval(refs.col(i), xj);
            }
        }
    }
    Ok(out)
}

pub fn select_references(x: &Matrix, config: &KernelConfig) -> Result<Matrix> {
    config.validate()?;
    let n = x.cols();
    if config.ref_method != RefMethod::AllTraining && config.ref_count > n {
        return Err(Error::dim(format!(
            "{} reference vectors requested from {n} samples",
            config.ref_count
        )));
    }
    match config.ref_method {
        RefMethod::AllTraining => Ok(x.clone()),
        RefMethod::RandomSubset => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut idx = index::sample(&mut rng, n, config.ref_count).into_vec();
            idx.sort_unstable();
            Ok(x.select_cols(&idx))
        }
        RefMethod::Kmeans => kmeans(x, config.ref_count, config.seed, DEFAULT_MAX_ITER, DEFAULT_TOL),
    }
}

/// `z = A^T (k(refs, x) - center_shift)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    /// `D x K`
    pub refs: Matrix,
    /// `K x d_p`
    pub a: Matrix,
    /// Mean reduced-kernel column over the training positives.
    pub center_shift: Vec<f64>,
    pub class_mean_embedded: Vec<f64>,
    pub kernel: Kernel,
    pub config: KernelConfig,
    pub class_id: u32,
    pub ridge: f64,
}

impl KernelModel {
    pub fn output_dim(&self) -> usize {
        self.a.cols()
    }
}

fn embedded_mean_from_kernel(kmat: &Matrix, ind: &ClassIndicator, a: &Matrix, shift: &[f64]) -> Vec<f64> {
    let pos = kmat.select_cols(&ind.positives).sub_col_vector(shift);
    a.t_matmul(&pos).col_mean()
}

/// Fits against a precomputed reduced kernel matrix `kmat = k(refs, x)`.
pub fn fit_kernel_with_matrix(
    refs: &Matrix,
    kernel: Kernel,
    config: &KernelConfig,
    kmat: &Matrix,
    ind: &ClassIndicator,
    t: &TargetMatrix,
    ridge: f64,
) -> Result<KernelModel> {
    if kmat.rows() != refs.cols() || kmat.cols() != ind.n || t.t.cols() != ind.n {
        return Err(Error::dim(format!(
            "kernel matrix {:?} does not match {} references and {} samples",
            kmat.shape(),
            refs.cols(),
            ind.n
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {ridge}")));
    }
    let (a, center_shift) = centered_regression(kmat, ind, t, ridge, None)?;
    let class_mean_embedded = embedded_mean_from_kernel(kmat, ind, &a, &center_shift);
    Ok(KernelModel {
        refs: refs.clone(),
        a,
        center_shift,
        class_mean_embedded,
        kernel,
        config: config.clone(),
        class_id: ind.class_id,
        ridge,
    })
}

/// Selects references, builds the reduced kernel matrix and solves the
/// class-centered regression for the coefficients.
pub fn fit_kernel_csda(
    x: &Matrix,
    ind: &ClassIndicator,
    t: &TargetMatrix,
    config: &KernelConfig,
    ridge: f64,
) -> Result<KernelModel> {
    if x.cols() != ind.n {
        return Err(Error::dim(format!("{} samples, indicator covers {}", x.cols(), ind.n)));
    }
    let refs = select_references(x, config)?;
    let kernel = config.resolve(x)?;
    let kmat = kernel_matrix(&refs, x, &kernel)?;
    fit_kernel_with_matrix(&refs, kernel, config, &kmat, ind, t, ridge)
}

pub fn project_kernel(model: &KernelModel, x: &Matrix) -> Result<Matrix> {
    let kmat = kernel_matrix(&model.refs, x, &model.kernel)?;
    Ok(model.a.t_matmul(&kmat.sub_col_vector(&model.center_shift)))
}

/// Per-class kernel models sharing references, the kernel matrix and one
/// factorization.
#[derive(Debug)]
pub struct BatchKernelModels {
    pub refs: Matrix,
    pub kernel: Kernel,
    pub solver: SharedCenteredSolver,
    pub models: BTreeMap<u32, KernelModel>,
    pub failures: BTreeMap<u32, Error>,
}

/// References are selected and the kernel matrix factored once; every class
/// then only pays for its own right-hand side.
///
/// `ridge = None` uses [`crate::linear::default_ridge`] on the kernel matrix.
pub fn fit_all_classes_kernel(
    x: &Matrix,
    labels: &[u32],
    class_ids: &[u32],
    d: usize,
    config: &KernelConfig,
    ridge: Option<f64>,
    master_seed: u64,
) -> Result<BatchKernelModels> {
    if labels.len() != x.cols() {
        return Err(Error::dim(format!("{} labels for {} samples", labels.len(), x.cols())));
    }
    let refs = select_references(x, config)?;
    let kernel = config.resolve(x)?;
    let kmat = kernel_matrix(&refs, x, &kernel)?;
    let ridge = ridge.unwrap_or_else(|| crate::linear::default_ridge(&kmat));
    let solver = SharedCenteredSolver::new(&kmat, ridge)?;
    let results = map_ordered(class_ids, |&p| -> Result<KernelModel> {
        let ind = encode_labels(labels, p)?;
        let t = compute_targets(&ind, d, master_seed)?;
        let (a, center_shift) = solver.solve_class(&kmat, &ind, &t)?;
        let class_mean_embedded = embedded_mean_from_kernel(&kmat, &ind, &a, &center_shift);
        Ok(KernelModel {
            refs: refs.clone(),
            a,
            center_shift,
            class_mean_embedded,
            kernel,
            config: config.clone(),
            class_id: p,
            ridge,
        })
    });
    let mut models = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (&p, r) in class_ids.iter().zip(results) {
        match r {
            Ok(m) => {
                models.insert(p, m);
            }
            Err(e) => {
                failures.insert(p, e);
            }
        }
    }
    Ok(BatchKernelModels {
        refs,
        kernel,
        solver,
        models,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbf_self_similarity_is_one() {
        let refs = Matrix::from_rows(&[&[0.3, -1.0], &[2.0, 0.5]]);
        let k = kernel_matrix(&refs, &refs, &Kernel::rbf(0.7)).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(1, 1)], 1.0);
    }

    #[test]
    fn rbf_wide_bandwidth_tends_to_one() {
        let refs = Matrix::from_rows(&[&[0.0, 10.0]]);
        let x = Matrix::from_rows(&[&[-3.0, 4.0, 7.0]]);
        let k = kernel_matrix(&refs, &x, &Kernel::rbf(1e6)).unwrap();
        assert!(k.data().iter().all(|&v| (v - 1.0).abs() < 1e-9 && v <= 1.0));
    }

    #[test]
    fn rbf_unit_distance_by_hand() {
        let pts = Matrix::from_rows(&[&[0.0, 1.0]]);
        let k = kernel_matrix(&pts, &pts, &Kernel::rbf(1.0)).unwrap();
        assert!((k[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k[(1, 0)] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn all_training_references_are_the_data() {
        let x = Matrix::from_fn(3, 7, |i, j| (i as f64) - (j as f64) * 0.5);
        let cfg = KernelConfig {
            ref_method: RefMethod::AllTraining,
            ..KernelConfig::default()
        };
        assert_eq!(select_references(&x, &cfg).unwrap(), x);
    }

    #[test]
    fn random_subset_is_deterministic() {
        let x = Matrix::from_fn(2, 40, |i, j| (i * 40 + j) as f64);
        let cfg = KernelConfig {
            ref_method: RefMethod::RandomSubset,
            ref_count: 6,
            seed: 9,
            ..KernelConfig::default()
        };
        let a = select_references(&x, &cfg).unwrap();
        assert_eq!(a, select_references(&x, &cfg).unwrap());
        assert_eq!(a.cols(), 6);
    }

    #[test]
    fn too_many_references() {
        let x = Matrix::zeros(2, 3);
        let cfg = KernelConfig {
            ref_count: 4,
            ..KernelConfig::default()
        };
        assert!(matches!(select_references(&x, &cfg), Err(Error::Dimension(_))));
    }

    #[test]
    fn bad_sigma_rejected() {
        let cfg = KernelConfig {
            sigma: Some(-1.0),
            ..KernelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn median_distance_of_collinear_points() {
        // distances among 0,1,3: {1, 3, 2} -> median 2
        let x = Matrix::from_rows(&[&[0.0, 1.0, 3.0]]);
        assert_eq!(median_pairwise_distance(&x, 0).unwrap(), 2.0);
    }
}
