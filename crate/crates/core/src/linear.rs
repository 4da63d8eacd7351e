//! Linear class-specific models.

use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{gen_eig_sym, Cholesky, EigPair, Matrix};
use crate::parallel::map_ordered;
use crate::targets::{class_mean, compute_targets, encode_labels, ClassIndicator, TargetMatrix};

/// Projection `z = W^T (x - class_mean_input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `D x d_p`
    pub w: Matrix,
    pub class_mean_input: Vec<f64>,
    pub class_mean_embedded: Vec<f64>,
    pub class_id: u32,
    pub ridge: f64,
}

impl LinearModel {
    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols()
    }
}

/// Ridge floor used when the caller does not pick one:
/// `1e-8 * trace(Fc Fc^T) / rows` on the globally centered features.
pub fn default_ridge(features: &Matrix) -> f64 {
    let mean = features.col_mean();
    let mut trace = 0.0;
    for j in 0..features.cols() {
        trace += features
            .col(j)
            .iter()
            .zip(&mean)
            .map(|(a, m)| (a - m) * (a - m))
            .sum::<f64>();
    }
    1e-8 * trace / features.rows().max(1) as f64
}

fn check_fit_inputs(x: &Matrix, ind: &ClassIndicator, t: &TargetMatrix) -> Result<()> {
    if x.cols() != ind.n || t.t.cols() != ind.n {
        return Err(Error::dim(format!(
            "data has {} samples, indicator {}, targets {}",
            x.cols(),
            ind.n,
            t.t.cols()
        )));
    }
    Ok(())
}

fn check_ridge(ridge: f64) -> Result<()> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {ridge}")));
    }
    Ok(())
}

fn singular(e: Error, what: &str) -> Error {
    match e {
        Error::NotPositiveDefinite { index, pivot } => Error::Singular(format!(
            "{what} is rank-deficient (pivot {pivot:e} at {index}); use a positive ridge"
        )),
        other => other,
    }
}

/// Solves `(Fc W Fc^T + ridge I) A = Fc W T^T` for class-centered features.
///
/// Shared by the linear and kernel fits; returns the coefficients together
/// with the positive-class feature mean used for centering.
pub(crate) fn centered_regression(
    features: &Matrix,
    ind: &ClassIndicator,
    t: &TargetMatrix,
    ridge: f64,
    weights: Option<&[f64]>,
) -> Result<(Matrix, Vec<f64>)> {
    let mean = class_mean(features, ind)?;
    let centered = features.sub_col_vector(&mean);
    let weighted_t = match weights {
        None => t.t.clone(),
        Some(w) => Matrix::from_fn(t.t.rows(), t.t.cols(), |i, j| t.t[(i, j)] * w[j]),
    };
    let mut system = centered.weighted_gram(weights);
    system.add_diag(ridge);
    let rhs = centered.matmul_t(&weighted_t);
    let chol = Cholesky::factor(&system).map_err(|e| singular(e, "scatter matrix"))?;
    Ok((chol.solve(&rhs), mean))
}

/// Mean of `W^T (x_i - mean)` over the positives; zero up to rounding.
fn embedded_positive_mean(x: &Matrix, ind: &ClassIndicator, w: &Matrix, mean: &[f64]) -> Vec<f64> {
    let mut centered_mean = vec![0.0; x.rows()];
    for &i in &ind.positives {
        for ((acc, v), m) in centered_mean.iter_mut().zip(x.col(i)).zip(mean) {
            *acc += v - m;
        }
    }
    let inv = 1.0 / ind.n_p as f64;
    centered_mean.iter_mut().for_each(|v| *v *= inv);
    w.t_matvec(&centered_mean)
}

/// Least-squares fit of `W^T X - T` on class-centered inputs.
///
/// `pos_weight` multiplies the loss of every positive sample (1 gives the
/// unweighted solution).
pub fn fit_linear_csda(
    x: &Matrix,
    ind: &ClassIndicator,
    t: &TargetMatrix,
    ridge: f64,
    pos_weight: f64,
) -> Result<LinearModel> {
    if !(pos_weight >= 1.0) || !pos_weight.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "positive weight must be >= 1, got {pos_weight}"
        )));
    }
    let weights: Vec<f64> = ind
        .mask
        .iter()
        .map(|&m| if m { pos_weight } else { 1.0 })
        .collect();
    fit_linear_csda_weighted(x, ind, t, ridge, &weights)
}

/// Weighted least squares with one non-negative weight per sample.
pub fn fit_linear_csda_weighted(
    x: &Matrix,
    ind: &ClassIndicator,
    t: &TargetMatrix,
    ridge: f64,
    weights: &[f64],
) -> Result<LinearModel> {
    check_fit_inputs(x, ind, t)?;
    check_ridge(ridge)?;
    if weights.len() != ind.n {
        return Err(Error::dim(format!("{} weights for {} samples", weights.len(), ind.n)));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument("sample weights must be non-negative".into()));
    }
    let (w, mean) = centered_regression(x, ind, t, ridge, Some(weights))?;
    let class_mean_embedded = embedded_positive_mean(x, ind, &w, &mean);
    Ok(LinearModel {
        w,
        class_mean_input: mean,
        class_mean_embedded,
        class_id: ind.class_id,
        ridge,
    })
}

/// Top generalized eigenpairs of `(S_I, S_T)` on class-centered data, with
/// `S_I` the positive second-moment matrix and `S_T = X X^T`.
pub fn csda_eigenpairs(x: &Matrix, ind: &ClassIndicator, d_p: usize, ridge: f64) -> Result<EigPair> {
    if x.cols() != ind.n {
        return Err(Error::dim(format!("{} samples, indicator covers {}", x.cols(), ind.n)));
    }
    check_ridge(ridge)?;
    let dim = x.rows();
    if d_p == 0 || d_p > dim {
        return Err(Error::dim(format!("d_p = {d_p} must lie in 1..={dim}")));
    }
    let bound = (ind.n_p - 1).min(dim);
    if d_p > bound {
        warn!(
            "class {}: d_p = {d_p} exceeds min(N_p - 1, D) = {bound}; trailing eigenvalues are ~0",
            ind.class_id
        );
    }
    let mean = class_mean(x, ind)?;
    let centered = x.sub_col_vector(&mean);
    let intra = centered.select_cols(&ind.positives).gram();
    let total = centered.gram();
    gen_eig_sym(&intra, &total, d_p, ridge)
}

/// Eigenanalysis route to the linear model, used as an oracle for the
/// regression solution.
pub fn fit_eigen_csda_oracle(
    x: &Matrix,
    ind: &ClassIndicator,
    d_p: usize,
    ridge: f64,
) -> Result<LinearModel> {
    let eig = csda_eigenpairs(x, ind, d_p, ridge)?;
    let mean = class_mean(x, ind)?;
    let class_mean_embedded = embedded_positive_mean(x, ind, &eig.vectors, &mean);
    Ok(LinearModel {
        w: eig.vectors,
        class_mean_input: mean,
        class_mean_embedded,
        class_id: ind.class_id,
        ridge,
    })
}

pub fn project_linear(model: &LinearModel, x: &Matrix) -> Result<Matrix> {
    if x.rows() != model.input_dim() {
        return Err(Error::dim(format!(
            "model expects {}-dimensional input, got {}",
            model.input_dim(),
            x.rows()
        )));
    }
    Ok(model.w.t_matmul(&x.sub_col_vector(&model.class_mean_input)))
}

/// One factorization serving every class-specific regression on the same
/// feature matrix `F` (`rows x N`).
///
/// Centering on class `p` turns the scatter into
/// `Fc Fc^T = C + N (m_p - mu)(m_p - mu)^T`, where `C` is the globally
/// centered scatter and `mu` the global mean. `C + ridge I` is factored once
/// and each class applies a rank-one Sherman-Morrison correction, so the
/// per-class cost is one `F T^T` product and a few triangular solves.
#[derive(Debug, Clone)]
pub struct SharedCenteredSolver {
    chol: Cholesky,
    global_mean: Vec<f64>,
    n: usize,
    ridge: f64,
}

impl SharedCenteredSolver {
    pub fn new(features: &Matrix, ridge: f64) -> Result<Self> {
        check_ridge(ridge)?;
        if features.cols() == 0 {
            return Err(Error::EmptyInput("feature matrix has no samples"));
        }
        let global_mean = features.col_mean();
        let mut system = features.sub_col_vector(&global_mean).gram();
        system.add_diag(ridge);
        let chol = Cholesky::factor(&system).map_err(|e| singular(e, "centered scatter"))?;
        Ok(Self {
            chol,
            global_mean,
            n: features.cols(),
            ridge,
        })
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Lower Cholesky factor of `C + ridge I`.
    pub fn factor(&self) -> &Matrix {
        self.chol.lower()
    }

    /// Coefficients of the class-centered regression and the class mean.
    pub fn solve_class(
        &self,
        features: &Matrix,
        ind: &ClassIndicator,
        t: &TargetMatrix,
    ) -> Result<(Matrix, Vec<f64>)> {
        if features.cols() != self.n || ind.n != self.n || t.t.cols() != self.n {
            return Err(Error::dim("shared solver used with a different sample set"));
        }
        let mean = class_mean(features, ind)?;
        // Fc T^T = F T^T - m (T e)^T; T e is ~0 but kept for exactness
        let mut rhs = features.matmul_t(&t.t);
        let t_sums = t.t.row_sums();
        for (c, s) in t_sums.iter().enumerate() {
            for (r, m) in rhs.col_mut(c).iter_mut().zip(&mean) {
                *r -= m * s;
            }
        }
        let delta: Vec<f64> = mean.iter().zip(&self.global_mean).map(|(m, g)| m - g).collect();
        let y = self.chol.solve(&rhs);
        let g = self.chol.solve_vec(&delta);
        let n = self.n as f64;
        let denom = 1.0 + n * crate::linalg::dot(&delta, &g);
        let proj = y.t_matvec(&delta);
        let mut coef = y;
        for (c, p) in proj.iter().enumerate() {
            let factor = n * p / denom;
            for (a, gi) in coef.col_mut(c).iter_mut().zip(&g) {
                *a -= factor * gi;
            }
        }
        Ok((coef, mean))
    }
}

/// Per-class linear models trained against one shared factorization.
#[derive(Debug)]
pub struct BatchLinearModels {
    pub solver: SharedCenteredSolver,
    pub models: BTreeMap<u32, LinearModel>,
    pub failures: BTreeMap<u32, Error>,
}

/// Fits one linear model per class id. Targets for class `p` come from the
/// stream `(master_seed, p)`; classes that cannot be fit are reported in
/// `failures` without affecting the others.
pub fn fit_all_classes(
    x: &Matrix,
    labels: &[u32],
    class_ids: &[u32],
    d: usize,
    ridge: f64,
    master_seed: u64,
) -> Result<BatchLinearModels> {
    if labels.len() != x.cols() {
        return Err(Error::dim(format!("{} labels for {} samples", labels.len(), x.cols())));
    }
    let solver = SharedCenteredSolver::new(x, ridge)?;
    let results = map_ordered(class_ids, |&p| -> Result<LinearModel> {
        let ind = encode_labels(labels, p)?;
        let t = compute_targets(&ind, d, master_seed)?;
        let (w, mean) = solver.solve_class(x, &ind, &t)?;
        let class_mean_embedded = embedded_positive_mean(x, &ind, &w, &mean);
        Ok(LinearModel {
            w,
            class_mean_input: mean,
            class_mean_embedded,
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
    Ok(BatchLinearModels {
        solver,
        models,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::encode_labels;

    #[test]
    fn unit_gram_gives_transposed_targets() {
        // columns e1, -e1, e2, -e2 scaled so X X^T = I and the class mean is 0
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = Matrix::from_rows(&[&[h, -h, 0.0, 0.0], &[0.0, 0.0, h, -h]]);
        let ind = encode_labels(&[1, 1, 2, 2], 1).unwrap();
        let t = compute_targets(&ind, 1, 3).unwrap();
        let model = fit_linear_csda(&x, &ind, &t, 0.0, 1.0).unwrap();
        assert!(model.w.max_abs_diff(&x.matmul_t(&t.t)) < 1e-14);
    }

    #[test]
    fn ridge_shrinks_weights_monotonically() {
        let x = Matrix::from_fn(3, 12, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64);
        let labels: Vec<u32> = (0..12).map(|j| (j % 3) as u32).collect();
        let ind = encode_labels(&labels, 0).unwrap();
        let t = compute_targets(&ind, 2, 1).unwrap();
        let mut last = f64::INFINITY;
        for ridge in [0.0, 1.0, 1e2, 1e4, 1e8] {
            let norm = fit_linear_csda(&x, &ind, &t, ridge, 1.0).unwrap().w.frobenius();
            assert!(norm < last);
            last = norm;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn rank_deficient_without_ridge_is_singular() {
        // third row duplicates the first
        let x = Matrix::from_fn(3, 10, |i, j| {
            let r = if i == 2 { 0 } else { i };
            ((r * 5 + j * j) % 7) as f64
        });
        let labels: Vec<u32> = (0..10).map(|j| (j % 2) as u32).collect();
        let ind = encode_labels(&labels, 0).unwrap();
        let t = compute_targets(&ind, 1, 1).unwrap();
        assert!(matches!(
            fit_linear_csda(&x, &ind, &t, 0.0, 1.0),
            Err(Error::Singular(_))
        ));
        assert!(fit_linear_csda(&x, &ind, &t, 1e-6, 1.0).is_ok());
    }

    #[test]
    fn weight_below_one_rejected() {
        let x = Matrix::identity(3);
        let ind = encode_labels(&[1, 1, 2], 1).unwrap();
        let t = compute_targets(&ind, 1, 1).unwrap();
        assert!(fit_linear_csda(&x, &ind, &t, 0.1, 0.5).is_err());
    }

    #[test]
    fn projection_of_class_mean_is_zero() {
        let x = Matrix::from_fn(2, 8, |i, j| (i + 1) as f64 * (j as f64).sin());
        let labels = [1, 1, 1, 2, 2, 2, 3, 3];
        let ind = encode_labels(&labels, 1).unwrap();
        let t = compute_targets(&ind, 1, 0).unwrap();
        let m = fit_linear_csda(&x, &ind, &t, 1e-6, 1.0).unwrap();
        let reps = Matrix::from_fn(2, 4, |i, _| m.class_mean_input[i]);
        assert_eq!(project_linear(&m, &reps).unwrap().max_abs(), 0.0);
        assert!(project_linear(&m, &Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn empty_batch_is_empty() {
        let x = Matrix::from_fn(2, 6, |i, j| (i * j) as f64 + j as f64);
        let batch = fit_all_classes(&x, &[1, 1, 2, 2, 3, 3], &[], 1, 1e-6, 0).unwrap();
        assert!(batch.models.is_empty() && batch.failures.is_empty());
    }
}
