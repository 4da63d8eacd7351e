use csda_web::{far_frr_impl, score_points_impl, synth_points_impl, targets_preview_impl};

fn split(points: &[f64], scores: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (p, s) in points.chunks(3).zip(scores) {
        if p[2] == 1.0 {
            pos.push(*s);
        } else {
            neg.push(*s);
        }
    }
    (pos, neg)
}

fn training_eer(points: &[f64], method: &str) -> f64 {
    let scores = score_points_impl(points, method, 1, 4).unwrap();
    let (pos, neg) = split(points, &scores);
    csda::eval::compute_eer(&pos, &neg).unwrap()
}

#[test]
fn kernel_beats_linear_on_the_ring() {
    let pts = synth_points_impl("ring-vs-core", 2, 80, 3.0, 9).unwrap();
    let lin = training_eer(&pts, "linear");
    let ker = training_eer(&pts, "kernel");
    assert!(ker < 0.02 && lin - ker > 0.1, "linear {lin}, kernel {ker}");
}

#[test]
fn curve_triples_are_monotone() {
    let pts = synth_points_impl("gaussian-blobs", 3, 30, 4.0, 2).unwrap();
    let scores = score_points_impl(&pts, "linear", 1, 0).unwrap();
    let (pos, neg) = split(&pts, &scores);
    let curve = far_frr_impl(&pos, &neg).unwrap();
    assert_eq!(curve.len() % 3, 0);
    let pts: Vec<&[f64]> = curve.chunks(3).collect();
    assert!(pts.last().unwrap()[0].is_infinite());
    for w in pts.windows(2) {
        assert!(w[0][0] < w[1][0]);
        assert!(w[0][1] >= w[1][1]);
        assert!(w[0][2] <= w[1][2]);
    }
}

#[test]
fn preview_rows_are_orthonormal() {
    let labels = [1, 2, 1, 3, 3, 1, 2, 2];
    let d = 3;
    let t = targets_preview_impl(&labels, 2, d, 11).unwrap();
    let n = labels.len();
    assert_eq!(t.len(), d * n);
    for a in 0..d {
        for b in 0..d {
            let dot: f64 = (0..n).map(|j| t[a * n + j] * t[b * n + j]).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-12);
        }
    }
}
