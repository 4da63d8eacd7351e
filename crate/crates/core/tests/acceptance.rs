//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use csda::eval::compute_eer;
use csda::io::runner::without_runtime;
use csda::io::{gen_synth, run_experiment_on, Dataset, ExperimentConfig, Method, NeuralSection, SynthMode, SynthSpec};
use csda::kernel::{fit_kernel_csda, kernel_matrix, KernelConfig, RefMethod};
use csda::linear::{fit_all_classes, fit_linear_csda};
use csda::neural::{
    backward, init_network, loss, solve_head, train, StackedTargets, TrainConfig, TrainMode,
};
use csda::parallel::with_workers;
use csda::targets::{center_to_class_mean, compute_targets, encode_labels};
use csda::Matrix;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.data())
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Labels with `n_p` samples of class 1 at random positions, the rest spread
/// over classes 2..=4.
fn labels_with_positives(rng: &mut ChaCha8Rng, n: usize, n_p: usize) -> Vec<u32> {
    let mut labels: Vec<u32> = (0..n)
        .map(|i| if i < n_p { 1 } else { 2 + (i % 3) as u32 })
        .collect();
    labels.shuffle(rng);
    labels
}

/// Orthonormal basis of the top-`k` generalized eigenvectors of `(a, b)`,
/// via explicit whitening with nalgebra.
fn oracle_eigenspace(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let l = b.clone().cholesky().expect("B is SPD").l();
    let linv = l.try_inverse().expect("L is invertible");
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = DMatrix::from_fn(a.nrows(), k, |r, c| eig.eigenvectors[(r, order[c])]);
    (linv.transpose() * top).qr().q()
}

/// Sine of the largest principal angle between the column spans.
fn max_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let qu = u.clone().qr().q();
    let qv = v.clone().qr().q();
    let resid = &qv - &qu * (qu.transpose() * &qv);
    resid.singular_values().max().asin()
}

fn criterion_targets() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_orth, mut worst_sum, mut worst_contain) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..200 {
        let n = rng.random_range(3..=200);
        let n_p = rng.random_range(2..n);
        let d_p = rng.random_range(1..=10usize.min(n - 1));
        let labels = labels_with_positives(&mut rng, n, n_p);
        let ind = encode_labels(&labels, 1).map_err(|e| e.to_string())?;
        let t = compute_targets(&ind, d_p, case).map_err(|e| e.to_string())?.t;
        let gram = t.matmul_t(&t);
        worst_orth = worst_orth.max(gram.max_abs_diff(&Matrix::identity(d_p)));
        worst_sum = worst_sum.max(t.row_sums().iter().fold(0.0, |m, s| m.max(s.abs())));
        let u = ind.centered_indicator();
        let proj = t.t_matvec(&t.matvec(&u));
        let norm = proj.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_contain = worst_contain.max((norm - 1.0).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst_orth < 1e-10, || format!("T T^T deviates by {worst_orth:e}"))?;
    ensure(worst_sum < 1e-10, || format!("T e reaches {worst_sum:e}"))?;
    ensure(worst_contain < 1e-8, || format!("indicator containment off by {worst_contain:e}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "max |TT^T - I| = {worst_orth:.1e}, max |Te| = {worst_sum:.1e}, containment {worst_contain:.1e}, {elapsed:.2?}"
    ))
}

fn criterion_linear_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = gaussian(&mut rng, 20, 200);
        let labels = labels_with_positives(&mut rng, 200, 30);
        let ind = encode_labels(&labels, 1).map_err(|e| e.to_string())?;
        let t = compute_targets(&ind, 5, seed).map_err(|e| e.to_string())?;
        let model = fit_linear_csda(&x, &ind, &t, 0.0, 1.0).map_err(|e| e.to_string())?;

        let xc = to_na(&center_to_class_mean(&x, &ind).map_err(|e| e.to_string())?);
        let tt = to_na(&t.t);
        let xt = &xc * tt.transpose();
        let a = &xt * xt.transpose();
        let b = &xc * xc.transpose();
        let oracle = oracle_eigenspace(&a, &b, 5);
        worst = worst.max(max_angle(&to_na(&model.w), &oracle));
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-6, || format!("largest principal angle {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(2), || format!("took {elapsed:?}"))?;
    Ok(format!("largest principal angle {worst:.1e} over 20 instances, {elapsed:.2?}"))
}

fn criterion_kernel_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_center = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let x = gaussian(&mut rng, 10, 300);
        let labels = labels_with_positives(&mut rng, 300, 40);
        let ind = encode_labels(&labels, 1).map_err(|e| e.to_string())?;
        let t = compute_targets(&ind, 5, seed).map_err(|e| e.to_string())?;
        let cfg = KernelConfig {
            ref_count: 40,
            ref_method: RefMethod::Kmeans,
            seed,
            ..KernelConfig::default()
        };
        let model = fit_kernel_csda(&x, &ind, &t, &cfg, 0.0).map_err(|e| e.to_string())?;
        let kmat = kernel_matrix(&model.refs, &x, &model.kernel).map_err(|e| e.to_string())?;
        let kc = kmat.sub_col_vector(&model.center_shift);
        let e_i = ind.e_i();
        worst_center = worst_center.max(kc.matvec(&e_i).iter().fold(0.0, |m, v| m.max(v.abs())));

        let kc = to_na(&kc);
        let kt = &kc * to_na(&t.t).transpose();
        let a = &kt * kt.transpose();
        let b = &kc * kc.transpose();
        let oracle = oracle_eigenspace(&a, &b, 5);
        worst = worst.max(max_angle(&to_na(&model.a), &oracle));
    }
    ensure(worst < 1e-6, || format!("largest principal angle {worst:e}"))?;
    ensure(worst_center < 1e-10, || format!("|Kc e_I| reaches {worst_center:e}"))?;
    Ok(format!("largest principal angle {worst:.1e}, max |Kc e_I| = {worst_center:.1e}"))
}

fn criterion_gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    let h = 1e-6;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let dims = rng.random_range(1..=4);
        let depth = rng.random_range(0..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=5)).collect();
        let d_out = rng.random_range(1..=3);
        let m = rng.random_range(1..=6);
        let mut net = init_network(dims, &hidden, d_out, seed).map_err(|e| e.to_string())?;
        let mut params = net.parameters();
        for p in &mut params {
            *p += 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        net.set_parameters(&params).map_err(|e| e.to_string())?;
        let x = gaussian(&mut rng, dims, m);
        let t = gaussian(&mut rng, d_out, m);
        let grads = backward(&net, &x, &t).map_err(|e| e.to_string())?.flatten();
        for k in 0..params.len() {
            let mut probe = net.clone();
            let mut p = params.clone();
            p[k] = params[k] + h;
            probe.set_parameters(&p).unwrap();
            let up = loss(&probe, &x, &t).unwrap();
            p[k] = params[k] - h;
            probe.set_parameters(&p).unwrap();
            let down = loss(&probe, &x, &t).unwrap();
            let fd = (up - down) / (2.0 * h);
            let scale = grads[k].abs().max(fd.abs());
            let rel = if scale == 0.0 { 0.0 } else { (grads[k] - fd).abs() / scale };
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:e}"))?;
    Ok(format!("worst relative error {worst:.1e} over 50 networks"))
}

fn blobs_fixture(seed: u64) -> Dataset {
    gen_synth(&SynthSpec {
        mode: SynthMode::GaussianBlobs,
        classes: 5,
        per_class: 100,
        dims: 10,
        separation: 8.0,
        seed,
    })
    .unwrap()
}

fn ring_fixture(seed: u64) -> Dataset {
    gen_synth(&SynthSpec {
        mode: SynthMode::RingVsCore,
        classes: 2,
        per_class: 300,
        dims: 2,
        separation: 3.0,
        seed,
    })
    .unwrap()
}

fn criterion_neural_degeneracy() -> Outcome {
    // bare head on class-centered input, closed-form head for one epoch
    let ds = blobs_fixture(7);
    let ind = encode_labels(&ds.labels, 2).map_err(|e| e.to_string())?;
    let t = compute_targets(&ind, 4, 7).map_err(|e| e.to_string())?;
    let ridge = 1e-6;
    let linear = fit_linear_csda(&ds.x, &ind, &t, ridge, 1.0).map_err(|e| e.to_string())?;
    let xc = center_to_class_mean(&ds.x, &ind).map_err(|e| e.to_string())?;
    let n = xc.cols() as f64;
    let linear_loss = linear.w.t_matmul(&xc).sub(&t.t).frobenius_sq() / n;
    let net = init_network(10, &[], 4, 7).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        mode: TrainMode::BatchClosedForm,
        epochs: 1,
        head_ridge: Some(ridge),
        ..TrainConfig::default()
    };
    let (_, trace) = train(net, &xc, &StackedTargets::single(2, t.clone()), &cfg).map_err(|e| e.to_string())?;
    let gap = (trace[0] - linear_loss).abs();
    ensure(gap < 1e-8, || format!("bare head loss {} vs linear {linear_loss} (gap {gap:e})", trace[0]))?;

    // one hidden layer trained by minibatch SGD on the same fixture and targets
    let single = StackedTargets::single(2, t);
    let net = init_network(10, &[32], 4, 15).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        batch_size: 10,
        epochs: 40,
        seed: 4,
        ..TrainConfig::default()
    };
    let (net, trace) = train(net, &ds.x, &single, &cfg).map_err(|e| e.to_string())?;
    let best_head = solve_head(&net, &ds.x, &single.t, Some(0.0)).map_err(|e| e.to_string())?;
    let mut optimal = net.clone();
    optimal.head = best_head;
    let floor = loss(&optimal, &ds.x, &single.t).map_err(|e| e.to_string())?;
    let reached = *trace.last().unwrap();
    let ratio = reached / floor;
    ensure(ratio <= 1.05, || format!("SGD loss {reached:.4e} is {ratio:.4}x the least-squares floor {floor:.4e}"))?;
    Ok(format!(
        "closed-form gap {gap:.1e}; SGD loss {reached:.4e} = {ratio:.4}x least-squares floor"
    ))
}

fn experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<f64, String> {
    let report = run_experiment_on(ds, cfg, "fixture").map_err(|e| e.to_string())?;
    ensure(report.failures.is_empty(), || format!("{} failed: {:?}", cfg.method, report.failures))?;
    Ok(report.verification.mean_eer)
}

fn ring_configs() -> (ExperimentConfig, ExperimentConfig, ExperimentConfig) {
    let base = |method| {
        let mut c = ExperimentConfig::new(method);
        c.d = 1;
        c.seeds = vec![5];
        c
    };
    let linear = base(Method::Linear);
    let mut kernel = base(Method::Kernel);
    kernel.kernel = Some(KernelConfig {
        ref_count: 60,
        seed: 5,
        ..KernelConfig::default()
    });
    let mut neural = base(Method::Neural);
    neural.neural = Some(NeuralSection {
        hidden: vec![32],
        train: TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 25,
            epochs: 100,
            seed: 1,
            ..TrainConfig::default()
        },
    });
    (linear, kernel, neural)
}

fn criterion_end_to_end() -> Outcome {
    let start = Instant::now();
    let blobs_ds = blobs_fixture(1);
    let mut cfg = ExperimentConfig::new(Method::Linear);
    cfg.d = 5;
    let blobs = experiment(&blobs_ds, &cfg)?;
    cfg.d = 1;
    let blobs_d1 = experiment(&blobs_ds, &cfg)?;

    let ring = ring_fixture(2);
    let (linear, kernel, neural) = ring_configs();
    let lin = experiment(&ring, &linear)?;
    let ker = experiment(&ring, &kernel)?;
    let neu = experiment(&ring, &neural)?;
    let elapsed = start.elapsed();
    let detail = format!(
        "blobs linear {blobs:.4} at d = 5 ({blobs_d1:.4} at d = 1); ring linear {lin:.3}, kernel {ker:.3}, neural {neu:.3}; {elapsed:.1?}"
    );
    ensure(blobs < 0.02, || format!("blobs linear mean EER at d = 5 is not below 0.02; {detail}"))?;
    ensure(lin - ker >= 0.15, || format!("ring kernel margin below 0.15; {detail}"))?;
    ensure(lin - neu >= 0.15, || format!("ring neural margin below 0.15; {detail}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(detail)
}

fn median3(mut f: impl FnMut() -> Duration) -> Duration {
    let mut v = [f(), f(), f()];
    v.sort();
    v[1]
}

fn criterion_batch_sharing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let (dims, n, classes) = (50, 2000, 50u32);
    let x = gaussian(&mut rng, dims, n);
    let mut labels: Vec<u32> = (0..n).map(|i| 1 + (i as u32 % classes)).collect();
    labels.shuffle(&mut rng);
    let ids: Vec<u32> = (1..=classes).collect();
    let (d, ridge, seed) = (5, 1e-6, 9);

    let batch = with_workers(Some(1), || fit_all_classes(&x, &labels, &ids, d, ridge, seed))
        .map_err(|e| e.to_string())?;
    ensure(batch.failures.is_empty(), || format!("{:?}", batch.failures))?;
    let mut worst = 0.0f64;
    for &p in &ids {
        let ind = encode_labels(&labels, p).unwrap();
        let t = compute_targets(&ind, d, seed).unwrap();
        let single = fit_linear_csda(&x, &ind, &t, ridge, 1.0).map_err(|e| e.to_string())?;
        worst = worst.max(single.w.max_abs_diff(&batch.models[&p].w));
    }
    ensure(worst < 1e-10, || format!("max parameter deviation {worst:e}"))?;

    let shared = median3(|| {
        let t = Instant::now();
        with_workers(Some(1), || fit_all_classes(&x, &labels, &ids, d, ridge, seed)).unwrap();
        t.elapsed()
    });
    let independent = median3(|| {
        let t = Instant::now();
        for &p in &ids {
            let ind = encode_labels(&labels, p).unwrap();
            let tm = compute_targets(&ind, d, seed).unwrap();
            fit_linear_csda(&x, &ind, &tm, ridge, 1.0).unwrap();
        }
        t.elapsed()
    });
    let ratio = shared.as_secs_f64() / independent.as_secs_f64();
    ensure(ratio < 0.6, || format!("shared {shared:?} vs independent {independent:?} (ratio {ratio:.3})"))?;
    Ok(format!(
        "max deviation {worst:.1e}; shared {shared:.2?} vs independent {independent:.2?} (ratio {ratio:.3})"
    ))
}

fn criterion_eer_suite() -> Outcome {
    let e0 = compute_eer(&[0.9, 0.8], &[0.2, 0.1]).map_err(|e| e.to_string())?;
    let e1 = compute_eer(&[0.8, 0.2], &[0.9, 0.1]).map_err(|e| e.to_string())?;
    let e2 = compute_eer(&[0.4, 0.6, 0.6, 0.1], &[0.6, 0.1, 0.4, 0.6]).map_err(|e| e.to_string())?;
    ensure(e0 == 0.0, || format!("separated EER {e0}"))?;
    ensure((e1 - 0.5).abs() < 1e-12, || format!("crossed EER {e1}"))?;
    ensure((e2 - 0.5).abs() < 1e-12, || format!("identical multisets EER {e2}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let np = rng.random_range(1..40);
        let nn = rng.random_range(1..40);
        // coarse grid so ties occur
        let mut draw = |k: usize| -> Vec<f64> {
            (0..k).map(|_| f64::from(rng.random_range(0..25u32)) / 10.0).collect()
        };
        let pos = draw(np);
        let neg = draw(nn);
        let base = compute_eer(&pos, &neg).unwrap();
        let transforms: [fn(f64) -> f64; 3] = [|s| s.exp(), |s| 3.0 * s - 7.0, |s| s * s * s + s];
        for f in transforms {
            let tp: Vec<f64> = pos.iter().map(|&s| f(s)).collect();
            let tn: Vec<f64> = neg.iter().map(|&s| f(s)).collect();
            worst = worst.max((compute_eer(&tp, &tn).unwrap() - base).abs());
        }
    }
    ensure(worst < 1e-9, || format!("monotone transform changed EER by {worst:e}"))?;
    Ok(format!("examples 0, 0.5, 0.5; transform invariance within {worst:.1e} on 100 sets"))
}

fn criterion_determinism() -> Outcome {
    let blobs = blobs_fixture(4);
    let ring = ring_fixture(4);
    let mut checked = Vec::new();
    for method in [Method::Linear, Method::EigenOracle, Method::Kernel, Method::Neural] {
        let mut cfg = ExperimentConfig::new(method);
        cfg.d = 2;
        cfg.seeds = vec![1, 2];
        if let Some(k) = cfg.kernel.as_mut() {
            k.ref_count = 40;
        }
        if let Some(n) = cfg.neural.as_mut() {
            n.hidden = vec![8];
            n.train.epochs = 3;
            n.train.learning_rate = 0.01;
            n.train.batch_size = 32;
        }
        let ds = if method == Method::Neural { &ring } else { &blobs };
        let mut reports = Vec::new();
        for workers in [1, 8, 1, 8] {
            cfg.workers = Some(workers);
            let r = run_experiment_on(ds, &cfg, "fixture").map_err(|e| e.to_string())?;
            let json = r.to_json().map_err(|e| e.to_string())?;
            let stripped = without_runtime(&json).map_err(|e| e.to_string())?;
            reports.push(serde_json::to_string(&stripped).unwrap());
        }
        ensure(reports.windows(2).all(|w| w[0] == w[1]), || {
            format!("{method} reports differ across executions")
        })?;
        checked.push(method.tag());
    }
    Ok(format!("identical reports at 1 and 8 workers for {}", checked.join(", ")))
}

type Criterion = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("1 targets suite", criterion_targets),
        ("2 linear equivalence", criterion_linear_equivalence),
        ("3 kernel equivalence", criterion_kernel_equivalence),
        ("4 neural gradient check", criterion_gradient_check),
        ("5 neural-linear degeneracy", criterion_neural_degeneracy),
        ("6 end-to-end EER sanity", criterion_end_to_end),
        ("7 batch-sharing exactness", criterion_batch_sharing),
        ("8 EER metric suite", criterion_eer_suite),
        ("9 determinism", criterion_determinism),
    ];
    let mut failed = BTreeMap::new();
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                println!("FAIL  criterion {name}: {why}");
                failed.insert(name, why);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("{} acceptance criteria failed", failed.len());
        std::process::exit(1);
    }
}

