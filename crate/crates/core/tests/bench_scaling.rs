use csda::io::bench::{bench, BenchGrid};
use csda::io::Method;
use csda::parallel::with_workers;
use std::sync::Mutex;

static SERIAL: Mutex<()> = Mutex::new(());

fn seconds(grid: BenchGrid) -> Vec<f64> {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    with_workers(Some(1), || bench(&grid))
        .unwrap()
        .into_iter()
        .map(|r| r.seconds)
        .collect()
}

#[test]
fn linear_time_roughly_doubles_with_n() {
    let t = seconds(BenchGrid {
        methods: vec![Method::Linear],
        n: vec![4000, 8000],
        d: vec![60],
        repeats: 5,
        ..BenchGrid::default()
    });
    let ratio = t[1] / t[0];
    assert!((1.3..=3.5).contains(&ratio), "N doubling ratio {ratio} ({t:?})");
}

#[test]
fn kernel_time_grows_with_references() {
    let t = seconds(BenchGrid {
        methods: vec![Method::Kernel],
        n: vec![2000],
        d: vec![10],
        k: vec![100, 200, 400],
        repeats: 3,
        ..BenchGrid::default()
    });
    assert!(t.windows(2).all(|w| w[1] > w[0]), "{t:?}");
}
