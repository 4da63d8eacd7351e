use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Outcome of a Lloyd run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centers: Matrix,
    pub assignments: Vec<usize>,
    /// Objective (sum of squared distances to the assigned center) measured
    /// after every assignment step.
    pub objective_trace: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ seeding; returns the `D x k` centers.
pub fn kmeans(x: &Matrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Matrix> {
    kmeans_fit(x, k, seed, max_iter, tol).map(|f| f.centers)
}

pub fn kmeans_fit(x: &Matrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansFit> {
    let n = x.cols();
    if k == 0 || k > n {
        return Err(Error::dim(format!("k-means with k = {k} on {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(x, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut trace = Vec::new();

    for _ in 0..max_iter.max(1) {
        let objective = assign(x, &centers, &mut assignments, &mut dist);
        let prev = trace.last().copied();
        trace.push(objective);
        if let Some(prev) = prev {
            if prev - objective <= tol * prev {
                break;
            }
        }
        update_centers(x, &mut centers, &assignments, &dist);
    }
    let objective = assign(x, &centers, &mut assignments, &mut dist);
    if trace.last().is_none_or(|&last| objective < last) {
        trace.push(objective);
    }
    Ok(KMeansFit {
        centers,
        assignments,
        objective_trace: trace,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let (d, n) = x.shape();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(x.col(i), x.col(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in best.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // rounding can leave `target` just past the last positive weight
            pick.unwrap_or_else(|| best.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every point coincides with a chosen center; take unused indices in order
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(x.col(i), x.col(next)));
        }
    }
    let mut centers = Matrix::zeros(d, k);
    for (c, &i) in chosen.iter().enumerate() {
        centers.col_mut(c).copy_from_slice(x.col(i));
    }
    centers
}

fn assign(x: &Matrix, centers: &Matrix, assignments: &mut [usize], dist: &mut [f64]) -> f64 {
    let mut objective = 0.0;
    for i in 0..x.cols() {
        let p = x.col(i);
        let mut best = (0usize, f64::INFINITY);
        for c in 0..centers.cols() {
            let d = sq_dist(p, centers.col(c));
            if d < best.1 {
                best = (c, d);
            }
        }
        assignments[i] = best.0;
        dist[i] = best.1;
        objective += best.1;
    }
    objective
}

fn update_centers(x: &Matrix, centers: &mut Matrix, assignments: &[usize], dist: &[f64]) {
    let (d, k) = centers.shape();
    let mut sums = Matrix::zeros(d, k);
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, v) in sums.col_mut(a).iter_mut().zip(x.col(i)) {
            *s += v;
        }
    }
    let mut taken = vec![false; x.cols()];
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            for (dst, s) in centers.col_mut(c).iter_mut().zip(sums.col(c)) {
                *dst = s * inv;
            }
            continue;
        }
        // empty cluster: re-seed at the point farthest from its center
        let far = (0..x.cols())
            .filter(|&i| !taken[i])
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
        if let Some(i) = far {
            taken[i] = true;
            centers.col_mut(c).copy_from_slice(x.col(i));
        }
    }
}
