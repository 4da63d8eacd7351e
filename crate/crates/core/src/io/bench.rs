//! Wall-clock benchmark of model fitting over a grid of problem sizes.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, NeuralSection};
use super::runner::fit_models;
use super::synth::{gen_synth, SynthMode, SynthSpec};
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::neural::TrainConfig;

pub const BENCH_HEADER: [&str; 6] = ["method", "N", "D", "K", "L", "seconds"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub methods: Vec<Method>,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    /// Reference counts, used by the kernel method only.
    pub k: Vec<usize>,
    /// Hidden widths, used by the neural method only.
    pub l: Vec<usize>,
    pub classes: usize,
    pub subspace: usize,
    pub epochs: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchGrid {
    fn default() -> Self {
        Self {
            methods: vec![],
            n: vec![],
            d: vec![],
            k: vec![],
            l: vec![],
            classes: 10,
            subspace: 5,
            epochs: 1,
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub k: Option<usize>,
    pub l: Option<usize>,
    /// Median over the repeats.
    pub seconds: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Times one call of the per-class fit for every grid cell. Kernel cells
/// iterate over `k`, neural cells over `l`; other methods ignore both.
pub fn bench(grid: &BenchGrid) -> Result<Vec<BenchRow>> {
    if grid.repeats == 0 || grid.classes < 2 || grid.subspace == 0 {
        return Err(Error::InvalidArgument(
            "bench needs repeats >= 1, classes >= 2 and subspace >= 1".into(),
        ));
    }
    let mut rows = Vec::new();
    for &method in &grid.methods {
        let extras: Vec<(Option<usize>, Option<usize>)> = match method {
            Method::Kernel => grid.k.iter().map(|&k| (Some(k), None)).collect(),
            Method::Neural => grid.l.iter().map(|&l| (None, Some(l))).collect(),
            Method::Linear | Method::EigenOracle => vec![(None, None)],
        };
        for &n in &grid.n {
            for &d in &grid.d {
                let spec = SynthSpec {
                    mode: SynthMode::GaussianBlobs,
                    classes: grid.classes,
                    per_class: (n / grid.classes).max(2),
                    dims: d,
                    separation: 4.0,
                    seed: grid.seed,
                };
                let ds = gen_synth(&spec)?;
                let classes = ds.classes();
                for &(k, l) in &extras {
                    let mut cfg = ExperimentConfig::new(method);
                    cfg.d = grid.subspace;
                    if let Some(k) = k {
                        cfg.kernel = Some(KernelConfig {
                            ref_count: k.min(ds.len()),
                            seed: grid.seed,
                            ..KernelConfig::default()
                        });
                    }
                    if let Some(l) = l {
                        cfg.neural = Some(NeuralSection {
                            hidden: vec![l],
                            train: TrainConfig {
                                epochs: grid.epochs,
                                seed: grid.seed,
                                ..TrainConfig::default()
                            },
                        });
                    }
                    let mut times = Vec::with_capacity(grid.repeats);
                    for _ in 0..grid.repeats {
                        let t = Instant::now();
                        fit_models(&cfg, &ds, &classes, grid.seed)?;
                        times.push(t.elapsed().as_secs_f64());
                    }
                    rows.push(BenchRow {
                        method,
                        n: ds.len(),
                        d,
                        k,
                        l,
                        seconds: median(times),
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(w: W, rows: &[BenchRow]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(BENCH_HEADER)?;
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.method.tag().to_string(),
            r.n.to_string(),
            r.d.to_string(),
            opt(r.k),
            opt(r.l),
            format!("{:.6e}", r.seconds),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_header_only() {
        let rows = bench(&BenchGrid::default()).unwrap();
        assert!(rows.is_empty());
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "method,N,D,K,L,seconds\n");
    }

    #[test]
    fn one_cell_per_combination() {
        let grid = BenchGrid {
            methods: vec![Method::Linear, Method::Kernel],
            n: vec![40],
            d: vec![3, 4],
            k: vec![5, 10],
            repeats: 1,
            classes: 4,
            subspace: 2,
            ..BenchGrid::default()
        };
        let rows = bench(&grid).unwrap();
        assert_eq!(rows.len(), 2 + 4);
        assert!(rows.iter().all(|r| r.seconds >= 0.0 && r.n == 40));
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("linear,40,3,,,"));
    }
}
