//! Verification protocol: per-class splits, class-mean prototypes,
//! reciprocal-distance similarity and the equal error rate.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Guards the reciprocal at zero distance.
pub const SIMILARITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Sorted, over all classes.
    pub train_indices: Vec<usize>,
    /// Sorted, over all classes.
    pub test_indices: Vec<usize>,
    pub per_class: BTreeMap<u32, ClassSplit>,
    pub ratio: f64,
    pub seed: u64,
}

/// Seeded per-class partition. Each class draws its own shuffle from a
/// ChaCha stream keyed by `(seed, class id)`, so a class's split does not
/// depend on which other classes are present.
pub fn split_per_class(labels: &[u32], ratio: f64, seed: u64) -> Result<SplitPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("no labels to split"));
    }
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let mut per_class = BTreeMap::new();
    let mut train_indices = Vec::new();
    let mut test_indices = Vec::new();
    for (class, mut idx) in members {
        let size = idx.len();
        if size < 2 {
            return Err(Error::DegenerateClass {
                class,
                reason: format!("needs at least 2 samples to split, found {size}"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(class));
        idx.shuffle(&mut rng);
        let n_train = ((ratio * size as f64).round() as usize).clamp(1, size - 1);
        let mut test = idx.split_off(n_train);
        idx.sort_unstable();
        test.sort_unstable();
        train_indices.extend_from_slice(&idx);
        test_indices.extend_from_slice(&test);
        per_class.insert(class, ClassSplit { train: idx, test });
    }
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(SplitPlan {
        train_indices,
        test_indices,
        per_class,
        ratio,
        seed,
    })
}

/// Prototype of a class: the mean of its embedded training positives.
pub fn class_mean_embedding(z: &Matrix) -> Result<Vec<f64>> {
    if z.cols() == 0 {
        return Err(Error::EmptyInput("no embedded samples to average"));
    }
    Ok(z.col_mean())
}

/// `s_j = 1 / (||z_j - zbar|| + eps)`.
pub fn similarity_scores(z_test: &Matrix, zbar: &[f64]) -> Result<Vec<f64>> {
    if z_test.rows() != zbar.len() {
        return Err(Error::dim(format!(
            "embedding has {} rows, prototype {}",
            z_test.rows(),
            zbar.len()
        )));
    }
    Ok((0..z_test.cols())
        .map(|j| {
            let d: f64 = z_test
                .col(j)
                .iter()
                .zip(zbar)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            1.0 / (d + SIMILARITY_EPS)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// FAR and FRR at every distinct score value plus a final `+inf` threshold.
/// Accept means `score >= threshold`.
pub fn far_frr_curve(pos: &[f64], neg: &[f64]) -> Result<Vec<RatePoint>> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyInput("both score lists must be non-empty"));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let mut pos = pos.to_vec();
    let mut neg = neg.to_vec();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let (mut ip, mut ineg) = (0usize, 0usize);
    let mut curve = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        while ip < pos.len() && pos[ip] < t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] < t {
            ineg += 1;
        }
        curve.push(RatePoint {
            threshold: t,
            far: (neg.len() - ineg) as f64 / nn,
            frr: ip as f64 / np,
        });
    }
    Ok(curve)
}

/// Equal error rate of a threshold sweep.
///
/// `FAR - FRR` starts at 1 and ends at -1 and never increases. The EER is
/// read at the first threshold where it stops being positive: exactly there
/// if it hits zero, otherwise by linear interpolation with the previous
/// threshold.
pub fn compute_eer(pos: &[f64], neg: &[f64]) -> Result<f64> {
    let curve = far_frr_curve(pos, neg)?;
    Ok(eer_from_curve(&curve))
}

pub fn eer_from_curve(curve: &[RatePoint]) -> f64 {
    let gap = |p: &RatePoint| p.far - p.frr;
    let k = curve
        .iter()
        .position(|p| gap(p) <= 0.0)
        .expect("sweep ends with FAR = 0 and FRR = 1");
    let cur = curve[k];
    if gap(&cur) == 0.0 || k == 0 {
        return cur.far;
    }
    let prev = curve[k - 1];
    let (g0, g1) = (gap(&prev), gap(&cur));
    let lambda = g0 / (g0 - g1);
    prev.far + lambda * (cur.far - prev.far)
}

/// Scores every test sample against a class prototype and returns the EER
/// of the positives (label `p`) against everyone else.
pub fn eer_against_prototype(zbar: &[f64], z_test: &Matrix, test_labels: &[u32], p: u32) -> Result<f64> {
    if z_test.cols() != test_labels.len() {
        return Err(Error::dim(format!(
            "{} embedded test samples, {} labels",
            z_test.cols(),
            test_labels.len()
        )));
    }
    let scores = similarity_scores(z_test, zbar)?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (s, &l) in scores.into_iter().zip(test_labels) {
        if l == p {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegenerateClass {
            class: p,
            reason: "test split lacks positives or negatives".into(),
        });
    }
    compute_eer(&pos, &neg)
}

/// [`eer_against_prototype`] with the prototype taken from the embedded
/// training positives.
pub fn evaluate_class(z_train_pos: &Matrix, z_test: &Matrix, test_labels: &[u32], p: u32) -> Result<f64> {
    let zbar = class_mean_embedding(z_train_pos)?;
    eer_against_prototype(&zbar, z_test, test_labels, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Per class, the mean EER over runs.
    pub per_class_eer: BTreeMap<u32, f64>,
    /// Mean over every (run, class) EER.
    pub mean_eer: f64,
    /// Population standard deviation over every (run, class) EER.
    pub std_eer: f64,
    pub runs: usize,
    pub method_tag: String,
    pub hyperparams: serde_json::Value,
}

/// Pools the per-class EERs of one or more runs.
pub fn aggregate(
    runs: &[BTreeMap<u32, f64>],
    method_tag: &str,
    hyperparams: serde_json::Value,
) -> Result<VerificationReport> {
    let all: Vec<f64> = runs.iter().flat_map(|r| r.values().copied()).collect();
    if all.is_empty() {
        return Err(Error::EmptyInput("no EER values to aggregate"));
    }
    if let Some(bad) = all.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::InvalidArgument(format!("EER {bad} outside [0, 1]")));
    }
    let (mean_eer, std_eer) = mean_std(&all);
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for run in runs {
        for (&c, &e) in run {
            let s = sums.entry(c).or_default();
            s.0 += e;
            s.1 += 1;
        }
    }
    Ok(VerificationReport {
        per_class_eer: sums.into_iter().map(|(c, (s, k))| (c, s / k as f64)).collect(),
        mean_eer,
        std_eer,
        runs: runs.len(),
        method_tag: method_tag.to_owned(),
        hyperparams,
    })
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
