//! WebAssembly bindings for the demo page in `www/`.
//!
//! Points cross the boundary as flat `[x, y, label, x, y, label, ...]`
//! arrays. Class 1 is always the verified class.

use csda::eval::{compute_eer, far_frr_curve, similarity_scores};
use csda::io::{gen_synth, SynthMode, SynthSpec};
use csda::kernel::{fit_kernel_csda, project_kernel, KernelConfig, RefMethod};
use csda::linear::{default_ridge, fit_linear_csda, project_linear};
use csda::targets::{compute_targets, encode_labels};
use csda::{Error, Matrix, Result};
use wasm_bindgen::prelude::*;

const TARGET: u32 = 1;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Two-dimensional synthetic points, flattened as `(x, y, label)` triples.
pub fn synth_points_impl(mode: &str, classes: usize, per_class: usize, separation: f64, seed: u64) -> Result<Vec<f64>> {
    let ds = gen_synth(&SynthSpec {
        mode: mode.parse::<SynthMode>()?,
        classes,
        per_class,
        dims: 2,
        separation,
        seed,
    })?;
    Ok((0..ds.len())
        .flat_map(|j| [ds.x[(0, j)], ds.x[(1, j)], f64::from(ds.labels[j])])
        .collect())
}

fn unpack(points: &[f64]) -> Result<(Matrix, Vec<u32>)> {
    if points.is_empty() || !points.len().is_multiple_of(3) {
        return Err(Error::InvalidArgument("points must be (x, y, label) triples".into()));
    }
    let n = points.len() / 3;
    let x = Matrix::from_fn(2, n, |r, c| points[3 * c + r]);
    let labels = points.chunks(3).map(|p| p[2] as u32).collect();
    Ok((x, labels))
}

type Embed = Box<dyn Fn(&Matrix) -> Result<Matrix>>;

/// A fitted class-1 projection and the mean embedding of its positives.
struct Verifier {
    embed: Embed,
    zbar: Vec<f64>,
}

fn fit(points: &[f64], method: &str, d: usize, seed: u64) -> Result<(Verifier, Matrix, Vec<u32>)> {
    let (x, labels) = unpack(points)?;
    let ind = encode_labels(&labels, TARGET)?;
    let t = compute_targets(&ind, d, seed)?;
    let ridge = default_ridge(&x);
    let embed: Embed = match method {
        "linear" => {
            let m = fit_linear_csda(&x, &ind, &t, ridge, 1.0)?;
            Box::new(move |q| project_linear(&m, q))
        }
        "kernel" => {
            let cfg = KernelConfig {
                ref_count: x.cols().min(60),
                ref_method: RefMethod::Kmeans,
                seed,
                ..KernelConfig::default()
            };
            let m = fit_kernel_csda(&x, &ind, &t, &cfg, 1e-6)?;
            Box::new(move |q| project_kernel(&m, q))
        }
        other => return Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
    };
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == TARGET).collect();
    let zbar = embed(&x.select_cols(&pos))?.col_mean();
    Ok((Verifier { embed, zbar }, x, labels))
}

/// Similarity to the class-1 prototype on a `grid x grid` lattice over
/// `[-extent, extent]^2`, row by row from the top.
pub fn similarity_field_impl(
    points: &[f64],
    method: &str,
    d: usize,
    grid: usize,
    extent: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if grid < 2 {
        return Err(Error::InvalidArgument("grid must be at least 2".into()));
    }
    let (v, _, _) = fit(points, method, d, seed)?;
    let step = 2.0 * extent / (grid - 1) as f64;
    let q = Matrix::from_fn(2, grid * grid, |r, c| {
        let (row, col) = (c / grid, c % grid);
        if r == 0 {
            -extent + step * col as f64
        } else {
            extent - step * row as f64
        }
    });
    similarity_scores(&(v.embed)(&q)?, &v.zbar)
}

/// Similarity of every input point to the class-1 prototype.
pub fn score_points_impl(points: &[f64], method: &str, d: usize, seed: u64) -> Result<Vec<f64>> {
    let (v, x, _) = fit(points, method, d, seed)?;
    similarity_scores(&(v.embed)(&x)?, &v.zbar)
}

/// FAR/FRR curve flattened as `(threshold, far, frr)` triples.
pub fn far_frr_impl(pos: &[f64], neg: &[f64]) -> Result<Vec<f64>> {
    Ok(far_frr_curve(pos, neg)?
        .into_iter()
        .flat_map(|p| [p.threshold, p.far, p.frr])
        .collect())
}

/// Targets of class `p` for the given labels, row-major `d x N`.
pub fn targets_preview_impl(labels: &[u32], p: u32, d: usize, seed: u64) -> Result<Vec<f64>> {
    let t = compute_targets(&encode_labels(labels, p)?, d, seed)?.t;
    Ok((0..t.rows()).flat_map(|r| t.row(r)).collect())
}

#[wasm_bindgen]
pub fn synth_points(mode: &str, classes: usize, per_class: usize, separation: f64, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    synth_points_impl(mode, classes, per_class, separation, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn similarity_field(
    points: &[f64],
    method: &str,
    d: usize,
    grid: usize,
    extent: f64,
    seed: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    similarity_field_impl(points, method, d, grid, extent, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn score_points(points: &[f64], method: &str, d: usize, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    score_points_impl(points, method, d, seed.into()).map_err(js)
}

#[wasm_bindgen]
pub fn far_frr(pos: &[f64], neg: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
    far_frr_impl(pos, neg).map_err(js)
}

#[wasm_bindgen]
pub fn eer(pos: &[f64], neg: &[f64]) -> std::result::Result<f64, JsError> {
    compute_eer(pos, neg).map_err(js)
}

#[wasm_bindgen]
pub fn targets_preview(labels: &[u32], p: u32, d: usize, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    targets_preview_impl(labels, p, d, seed.into()).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unpack_rejects_ragged_input() {
        assert!(unpack(&[1.0, 2.0]).is_err());
        let (x, labels) = unpack(&[1.0, 2.0, 1.0, 3.0, 4.0, 2.0]).unwrap();
        assert_eq!(x.shape(), (2, 2));
        assert_eq!(x[(1, 1)], 4.0);
        assert_eq!(labels, vec![1, 2]);
    }

    #[test]
    fn field_has_grid_squared_values() {
        let pts = synth_points_impl("gaussian-blobs", 2, 15, 6.0, 3).unwrap();
        let f = similarity_field_impl(&pts, "linear", 1, 7, 10.0, 0).unwrap();
        assert_eq!(f.len(), 49);
        assert!(f.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn unknown_method_is_an_error() {
        let pts = synth_points_impl("gaussian-blobs", 2, 10, 6.0, 3).unwrap();
        assert!(score_points_impl(&pts, "quadratic", 1, 0).is_err());
    }
}
