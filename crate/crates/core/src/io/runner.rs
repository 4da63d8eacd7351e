//! End-to-end verification experiments.
//!
//! Each run splits every class, fits one class-specific model per class
//! (sharing whatever the method allows), embeds the test samples of all
//! classes and scores them against each class prototype.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExperimentConfig, Method};
use super::features::{load_features, Dataset};
use super::model_file::SavedModel;
use super::synth::gen_synth;
use crate::error::{Error, Result};
use crate::eval::{aggregate, eer_against_prototype, split_per_class, VerificationReport};
use crate::kernel::{fit_all_classes_kernel, RefMethod};
use crate::linear::{default_ridge, fit_all_classes, fit_eigen_csda_oracle};
use crate::neural::{init_network, train, NeuralBundle, StackedTargets, TrainConfig};
use crate::parallel::{map_ordered, with_workers};
use crate::targets::{compute_targets, encode_labels};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub n: usize,
    pub d: usize,
    pub classes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub per_class_eer: BTreeMap<u32, f64>,
    pub failures: BTreeMap<u32, String>,
    /// Values resolved during fitting (ridge, bandwidth, reference count, ...).
    pub resolved: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub seed: u64,
    pub fit_seconds: f64,
    pub eval_seconds: f64,
}

/// Everything that may differ between otherwise identical executions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    /// Requested worker count; `null` means all available cores.
    pub workers: Option<usize>,
    pub total_seconds: f64,
    pub runs: Vec<RunTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub method: String,
    /// The config as run, without the worker count and output path.
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub notes: Vec<String>,
    pub runs: Vec<RunRecord>,
    pub verification: VerificationReport,
    /// First failure message of every class that failed in some run.
    pub failures: BTreeMap<u32, String>,
    pub runtime: Runtime,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Parses a report and drops its `runtime` section, for comparisons.
pub fn without_runtime(report_json: &str) -> Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_str(report_json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("runtime");
    }
    Ok(v)
}

/// Models fitted on one training set, plus the classes that could not be fit.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: SavedModel,
    pub failures: BTreeMap<u32, String>,
    pub resolved: serde_json::Value,
    pub notes: Vec<String>,
}

fn all_failed(classes: &[u32], e: &Error) -> BTreeMap<u32, String> {
    classes.iter().map(|&c| (c, e.to_string())).collect()
}

/// Fits the configured method on `train` for every class in `classes`.
/// Per-class problems land in `failures`; it is an error only if no class
/// could be fit.
pub fn fit_models(cfg: &ExperimentConfig, train_set: &Dataset, classes: &[u32], seed: u64) -> Result<FitOutcome> {
    let x = &train_set.x;
    let labels = &train_set.labels;
    let d = cfg.d;
    let mut notes = Vec::new();
    let (model, mut failures, resolved) = match cfg.method {
        Method::Linear => {
            let ridge = cfg.ridge.unwrap_or_else(|| default_ridge(x));
            match fit_all_classes(x, labels, classes, d, ridge, seed) {
                Ok(batch) => (
                    SavedModel::Set(batch.models.into_values().map(SavedModel::Linear).collect()),
                    batch.failures.into_iter().map(|(c, e)| (c, e.to_string())).collect(),
                    json!({ "ridge": ridge }),
                ),
                Err(e) => (SavedModel::Set(vec![]), all_failed(classes, &e), json!({ "ridge": ridge })),
            }
        }
        Method::EigenOracle => {
            let ridge = cfg.ridge.unwrap_or_else(|| default_ridge(x));
            let fits = map_ordered(classes, |&p| {
                let ind = encode_labels(labels, p)?;
                fit_eigen_csda_oracle(x, &ind, d, ridge)
            });
            let mut models = Vec::new();
            let mut failures = BTreeMap::new();
            for (&p, r) in classes.iter().zip(fits) {
                match r {
                    Ok(m) => models.push(SavedModel::Linear(m)),
                    Err(e) => {
                        failures.insert(p, e.to_string());
                    }
                }
            }
            (SavedModel::Set(models), failures, json!({ "ridge": ridge }))
        }
        Method::Kernel => {
            let mut kcfg = cfg.kernel.clone().unwrap_or_default();
            if kcfg.ref_method != RefMethod::AllTraining && kcfg.ref_count > x.cols() {
                let msg = format!(
                    "ref_count {} exceeds the {} training samples; clamped",
                    kcfg.ref_count,
                    x.cols()
                );
                warn!("{msg}");
                notes.push(msg);
                kcfg.ref_count = x.cols();
            }
            match fit_all_classes_kernel(x, labels, classes, d, &kcfg, cfg.ridge, seed) {
                Ok(batch) => {
                    let resolved = json!({
                        "ridge": batch.solver.ridge(),
                        "sigma": batch.kernel.sigma,
                        "ref_count": batch.refs.cols(),
                    });
                    (
                        SavedModel::Set(batch.models.into_values().map(SavedModel::Kernel).collect()),
                        batch.failures.into_iter().map(|(c, e)| (c, e.to_string())).collect(),
                        resolved,
                    )
                }
                Err(e) => (SavedModel::Set(vec![]), all_failed(classes, &e), json!({})),
            }
        }
        Method::Neural => {
            let section = cfg.neural.clone().unwrap_or_default();
            let tcfg = TrainConfig {
                seed: section.train.seed.wrapping_add(seed),
                ..section.train.clone()
            };
            let mut parts = Vec::new();
            let mut failures = BTreeMap::new();
            for &p in classes {
                match encode_labels(labels, p).and_then(|ind| compute_targets(&ind, d, seed)) {
                    Ok(t) => parts.push((p, t)),
                    Err(e) => {
                        failures.insert(p, e.to_string());
                    }
                }
            }
            let resolved = json!({ "train_seed": tcfg.seed, "outputs": parts.len() * d });
            match fit_neural(x, labels, parts, &section.hidden, &tcfg) {
                Ok((bundle, final_loss)) => {
                    let mut resolved = resolved;
                    resolved["final_loss"] = json!(final_loss);
                    (SavedModel::Neural(bundle), failures, resolved)
                }
                Err(e) => {
                    for &p in classes {
                        failures.entry(p).or_insert_with(|| e.to_string());
                    }
                    (SavedModel::Set(vec![]), failures, resolved)
                }
            }
        }
    };
    for p in model.class_ids() {
        failures.remove(&p);
    }
    if model.class_ids().is_empty() {
        return Err(Error::AllClassesFailed(failures));
    }
    Ok(FitOutcome {
        model,
        failures,
        resolved,
        notes,
    })
}

fn fit_neural(
    x: &crate::linalg::Matrix,
    labels: &[u32],
    parts: Vec<(u32, crate::targets::TargetMatrix)>,
    hidden: &[usize],
    tcfg: &TrainConfig,
) -> Result<(NeuralBundle, Option<f64>)> {
    let stacked = StackedTargets::stack(parts)?;
    let net = init_network(x.rows(), hidden, stacked.t.rows(), tcfg.seed)?;
    let (model, trace) = train(net, x, &stacked, tcfg)?;
    let mut bundle = NeuralBundle {
        model,
        blocks: stacked.blocks,
        class_means: BTreeMap::new(),
    };
    let ids: Vec<u32> = bundle.blocks.keys().copied().collect();
    for p in ids {
        let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == p).collect();
        let z = bundle.embed(p, &x.select_cols(&pos))?;
        bundle.class_means.insert(p, z.col_mean());
    }
    Ok((bundle, trace.last().copied()))
}

/// Per-class EER of a fitted model on a labelled test set.
pub fn evaluate_model(model: &SavedModel, test: &Dataset) -> (BTreeMap<u32, f64>, BTreeMap<u32, String>) {
    let ids = model.class_ids();
    let results = map_ordered(&ids, |&p| {
        let (z, zbar) = model.embed(p, &test.x)?;
        eer_against_prototype(&zbar, &z, &test.labels, p)
    });
    let mut eers = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (p, r) in ids.into_iter().zip(results) {
        match r {
            Ok(e) => {
                eers.insert(p, e);
            }
            Err(e) => {
                failures.insert(p, e.to_string());
            }
        }
    }
    (eers, failures)
}

fn hyperparams(cfg: &ExperimentConfig) -> serde_json::Value {
    json!({
        "d": cfg.d,
        "ridge": cfg.ridge,
        "split_ratio": cfg.split_ratio,
        "seeds": cfg.seeds,
        "kernel": cfg.kernel,
        "neural": cfg.neural,
    })
}

/// Loads (or generates) the data named by `cfg`, runs the experiment and
/// writes the JSON report to `cfg.output` when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (ds, source) = match (&cfg.data, &cfg.synth) {
        (Some(path), _) => (load_features(path)?, path.display().to_string()),
        (None, Some(spec)) => (gen_synth(spec)?, format!("synth:{}", spec.mode)),
        (None, None) => unreachable!("validated"),
    };
    let report = run_experiment_on(&ds, cfg, &source)?;
    if let Some(out) = &cfg.output {
        write_report(&report, out)?;
    }
    Ok(report)
}

pub fn write_report(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, report.to_json()?)?;
    Ok(())
}

/// Runs the experiment on an in-memory dataset; `cfg.data`/`cfg.synth` are
/// only echoed.
pub fn run_experiment_on(ds: &Dataset, cfg: &ExperimentConfig, source: &str) -> Result<ExperimentReport> {
    let mut check = cfg.clone();
    if check.data.is_none() && check.synth.is_none() {
        check.data = Some(source.into());
    }
    check.validate()?;
    let workers = cfg.effective_workers()?;
    let start = Instant::now();
    let classes = ds.classes();
    if classes.len() < 2 {
        return Err(Error::EmptyInput("verification needs at least two classes"));
    }

    let outcome = with_workers(workers, || -> Result<_> {
        let mut runs = Vec::new();
        let mut timings = Vec::new();
        let mut notes = Vec::new();
        for &seed in &cfg.seeds {
            let plan = split_per_class(&ds.labels, cfg.split_ratio, seed)?;
            let train_set = ds.subset(&plan.train_indices);
            let test_set = ds.subset(&plan.test_indices);
            info!(
                "seed {seed}: {} train / {} test samples, {} classes",
                train_set.len(),
                test_set.len(),
                classes.len()
            );
            let t0 = Instant::now();
            let fit = fit_models(cfg, &train_set, &classes, seed)?;
            let fit_seconds = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let (per_class_eer, eval_failures) = evaluate_model(&fit.model, &test_set);
            let eval_seconds = t1.elapsed().as_secs_f64();
            let mut failures = fit.failures;
            failures.extend(eval_failures);
            for n in fit.notes {
                if !notes.contains(&n) {
                    notes.push(n);
                }
            }
            runs.push(RunRecord {
                seed,
                n_train: train_set.len(),
                n_test: test_set.len(),
                per_class_eer,
                failures,
                resolved: fit.resolved,
            });
            timings.push(RunTiming {
                seed,
                fit_seconds,
                eval_seconds,
            });
        }
        Ok((runs, timings, notes))
    });
    let (runs, timings, mut notes) = outcome?;

    let mut failures: BTreeMap<u32, String> = BTreeMap::new();
    for r in &runs {
        for (c, e) in &r.failures {
            failures.entry(*c).or_insert_with(|| e.clone());
        }
    }
    let eers: Vec<BTreeMap<u32, f64>> = runs.iter().map(|r| r.per_class_eer.clone()).collect();
    if eers.iter().all(BTreeMap::is_empty) {
        return Err(Error::AllClassesFailed(failures));
    }
    let verification = aggregate(&eers, cfg.method.tag(), hyperparams(cfg))?;
    notes.push("splits are drawn per class from the run seed".into());
    notes.push("std_eer is the population deviation over all (run, class) pairs".into());

    let mut echo = cfg.clone();
    echo.workers = None;
    echo.output = None;
    Ok(ExperimentReport {
        format_version: REPORT_FORMAT_VERSION,
        method: cfg.method.tag().into(),
        config: echo,
        dataset: DatasetSummary {
            source: source.into(),
            n: ds.len(),
            d: ds.dims(),
            classes,
        },
        notes,
        runs,
        verification,
        failures,
        runtime: Runtime {
            workers,
            total_seconds: start.elapsed().as_secs_f64(),
            runs: timings,
        },
    })
}
