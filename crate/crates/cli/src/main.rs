use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use csda::eval::aggregate;
use csda::io::bench::{bench, write_bench_csv, BenchGrid};
use csda::io::features::{read_header, FEATURE_MAGIC};
use csda::io::model_file::MODEL_MAGIC;
use csda::io::runner::{evaluate_model, fit_models, write_report};
use csda::io::{
    gen_synth, load_features, load_model, run_experiment, save_features, save_model, Dtype, ExperimentConfig,
    Method, SavedModel, SynthMode, SynthSpec,
};
use csda::kernel::{KernelConfig, KernelKind, RefMethod};
use csda::neural::TrainMode;

#[derive(Parser)]
#[command(name = "csda", version, about = "Class-specific discriminant analysis for one-vs-rest verification")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset (.csfv, or .csv by extension).
    GenSynth(GenSynthArgs),
    /// Fit one model per class on a whole dataset and save it.
    Train(TrainArgs),
    /// Score a saved model on a labelled dataset and print per-class EERs.
    Evaluate(EvaluateArgs),
    /// Split, fit, score and aggregate over every configured seed.
    Experiment(ExperimentArgs),
    /// Time model fitting over a grid of sizes and write CSV.
    Bench(BenchArgs),
    /// Print the header of a feature file or the records of a model file.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Linear,
    EigenOracle,
    Kernel,
    Neural,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Linear => Method::Linear,
            MethodArg::EigenOracle => Method::EigenOracle,
            MethodArg::Kernel => Method::Kernel,
            MethodArg::Neural => Method::Neural,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    GaussianBlobs,
    RingVsCore,
}

impl From<ModeArg> for SynthMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::GaussianBlobs => SynthMode::GaussianBlobs,
            ModeArg::RingVsCore => SynthMode::RingVsCore,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefArg {
    Kmeans,
    RandomSubset,
    AllTraining,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainModeArg {
    Minibatch,
    BatchClosedForm,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long, value_enum, default_value = "gaussian-blobs")]
    mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 10)]
    dims: usize,
    #[arg(long, default_value_t = 8.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "f64")]
    dtype: DtypeArg,
    #[arg(short, long)]
    out: PathBuf,
}

/// Config file plus a flag for every field; flags win over the file.
#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Feature file (.csfv or .csv).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    synth_mode: Option<ModeArg>,
    #[arg(long)]
    synth_classes: Option<usize>,
    #[arg(long)]
    synth_per_class: Option<usize>,
    #[arg(long)]
    synth_dims: Option<usize>,
    #[arg(long)]
    synth_separation: Option<f64>,
    #[arg(long)]
    synth_seed: Option<u64>,
    /// Subspace dimension per class.
    #[arg(short = 'd', long = "dim")]
    d: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    split_ratio: Option<f64>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    ref_count: Option<usize>,
    #[arg(long, value_enum)]
    ref_method: Option<RefArg>,
    #[arg(long)]
    kernel_seed: Option<u64>,
    /// Comma-separated hidden widths; an empty string gives a bare head.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<String>>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    train_mode: Option<TrainModeArg>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    head_ridge: Option<f64>,
    /// Worker threads; falls back to CSDA_WORKERS, then all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Where to write the JSON report.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Seed for the targets; defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Model file to write.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Write the JSON result here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "linear")]
    methods: Vec<MethodArg>,
    #[arg(long, value_delimiter = ',', default_value = "1000,2000")]
    n: Vec<usize>,
    #[arg(long = "dims", value_delimiter = ',', default_value = "50")]
    d: Vec<usize>,
    /// Reference counts for the kernel method.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    k: Vec<usize>,
    /// Hidden widths for the neural method.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    l: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 5)]
    subspace: usize,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    path: PathBuf,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.method) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(m)) => ExperimentConfig::new(m.into()),
            (None, None) => bail!("give --config or --method"),
        };
        if let Some(m) = self.method {
            cfg.method = m.into();
        }
        cfg.normalize_sections();

        if let Some(p) = &self.data {
            cfg.data = Some(p.clone());
            cfg.synth = None;
        }
        let synth_flags = self.synth_mode.is_some()
            || self.synth_classes.is_some()
            || self.synth_per_class.is_some()
            || self.synth_dims.is_some()
            || self.synth_separation.is_some()
            || self.synth_seed.is_some();
        if synth_flags {
            let mut s = cfg.synth.take().unwrap_or(SynthSpec {
                mode: SynthMode::GaussianBlobs,
                classes: 5,
                per_class: 100,
                dims: 10,
                separation: 8.0,
                seed: 0,
            });
            if let Some(v) = self.synth_mode {
                s.mode = v.into();
            }
            if let Some(v) = self.synth_classes {
                s.classes = v;
            }
            if let Some(v) = self.synth_per_class {
                s.per_class = v;
            }
            if let Some(v) = self.synth_dims {
                s.dims = v;
            }
            if let Some(v) = self.synth_separation {
                s.separation = v;
            }
            if let Some(v) = self.synth_seed {
                s.seed = v;
            }
            cfg.synth = Some(s);
            if self.data.is_some() {
                bail!("--data and --synth-* flags are exclusive");
            }
            cfg.data = None;
        }

        if let Some(v) = self.d {
            cfg.d = v;
        }
        if let Some(v) = self.ridge {
            cfg.ridge = Some(v);
        }
        if let Some(v) = self.split_ratio {
            cfg.split_ratio = v;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = Some(v);
        }
        if let Some(v) = &self.output {
            cfg.output = Some(v.clone());
        }

        let kernel_flags = self.kernel.is_some()
            || self.sigma.is_some()
            || self.ref_count.is_some()
            || self.ref_method.is_some()
            || self.kernel_seed.is_some();
        match cfg.kernel.as_mut() {
            Some(k) => apply_kernel(self, k),
            None if kernel_flags => bail!("kernel flags only apply to --method kernel"),
            None => {}
        }

        let neural_flags = self.hidden.is_some()
            || self.learning_rate.is_some()
            || self.batch_size.is_some()
            || self.epochs.is_some()
            || self.train_mode.is_some()
            || self.train_seed.is_some()
            || self.momentum.is_some()
            || self.head_ridge.is_some();
        match cfg.neural.as_mut() {
            Some(n) => {
                if let Some(h) = &self.hidden {
                    n.hidden = parse_widths(h)?;
                }
                let t = &mut n.train;
                if let Some(v) = self.learning_rate {
                    t.learning_rate = v;
                }
                if let Some(v) = self.batch_size {
                    t.batch_size = v;
                }
                if let Some(v) = self.epochs {
                    t.epochs = v;
                }
                if let Some(v) = self.train_mode {
                    t.mode = match v {
                        TrainModeArg::Minibatch => TrainMode::Minibatch,
                        TrainModeArg::BatchClosedForm => TrainMode::BatchClosedForm,
                    };
                }
                if let Some(v) = self.train_seed {
                    t.seed = v;
                }
                if let Some(v) = self.momentum {
                    t.momentum = v;
                }
                if let Some(v) = self.head_ridge {
                    t.head_ridge = Some(v);
                }
            }
            None if neural_flags => bail!("neural flags only apply to --method neural"),
            None => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_kernel(args: &ConfigArgs, k: &mut KernelConfig) {
    if let Some(v) = args.kernel {
        k.kind = match v {
            KernelArg::Rbf => KernelKind::Rbf,
            KernelArg::Linear => KernelKind::Linear,
        };
    }
    if let Some(v) = args.sigma {
        k.sigma = Some(v);
    }
    if let Some(v) = args.ref_count {
        k.ref_count = v;
    }
    if let Some(v) = args.ref_method {
        k.ref_method = match v {
            RefArg::Kmeans => RefMethod::Kmeans,
            RefArg::RandomSubset => RefMethod::RandomSubset,
            RefArg::AllTraining => RefMethod::AllTraining,
        };
    }
    if let Some(v) = args.kernel_seed {
        k.seed = v;
    }
}

fn parse_widths(items: &[String]) -> Result<Vec<usize>> {
    items
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad hidden width {s:?}")))
        .collect()
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<csda::io::Dataset> {
    match (&cfg.data, &cfg.synth) {
        (Some(p), _) => Ok(load_features(p).with_context(|| format!("reading {}", p.display()))?),
        (None, Some(s)) => Ok(gen_synth(s)?),
        (None, None) => bail!("no data source"),
    }
}

fn cmd_gen_synth(a: &GenSynthArgs) -> Result<()> {
    let spec = SynthSpec {
        mode: a.mode.into(),
        classes: a.classes,
        per_class: a.per_class,
        dims: a.dims,
        separation: a.separation,
        seed: a.seed,
    };
    let ds = gen_synth(&spec)?;
    let dtype = match a.dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    save_features(&ds, &a.out, dtype)?;
    info!("wrote {} samples of dimension {} to {}", ds.len(), ds.dims(), a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let ds = load_dataset(&cfg)?;
    let seed = a.seed.unwrap_or(cfg.seeds[0]);
    let classes = ds.classes();
    let fit = csda::parallel::with_workers(cfg.effective_workers()?, || fit_models(&cfg, &ds, &classes, seed))?;
    for (c, e) in &fit.failures {
        warn!("class {c}: {e}");
    }
    for n in &fit.notes {
        info!("{n}");
    }
    save_model(&fit.model, &a.model)?;
    println!(
        "saved {} model for {} classes to {}",
        cfg.method,
        fit.model.class_ids().len(),
        a.model.display()
    );
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let ds = load_features(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let (eers, failures) = evaluate_model(&model, &ds);
    for (c, e) in &failures {
        warn!("class {c}: {e}");
    }
    if eers.is_empty() {
        bail!("no class could be evaluated");
    }
    let tag = match &model {
        SavedModel::Set(items) => items.first().map_or("set", |m| m.kind().name()),
        other => other.kind().name(),
    };
    let report = aggregate(&[eers], tag, serde_json::json!({}))?;
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "verification": report,
        "failures": failures,
    }))? + "\n";
    match &a.output {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    if a.dry_run {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let output = cfg.output.take();
    let report = run_experiment(&cfg)?;
    for (c, e) in &report.failures {
        warn!("class {c}: {e}");
    }
    let v = &report.verification;
    println!(
        "{}: mean EER {:.4} (std {:.4}) over {} classes x {} runs",
        report.method,
        v.mean_eer,
        v.std_eer,
        v.per_class_eer.len(),
        v.runs
    );
    if let Some(p) = output {
        write_report(&report, &p)?;
        println!("report written to {}", p.display());
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let grid = BenchGrid {
        methods: a.methods.iter().map(|&m| m.into()).collect(),
        n: a.n.clone(),
        d: a.d.clone(),
        k: a.k.clone(),
        l: a.l.clone(),
        classes: a.classes,
        subspace: a.subspace,
        epochs: a.epochs,
        repeats: a.repeats,
        seed: a.seed,
    };
    let rows = bench(&grid)?;
    match &a.out {
        Some(p) => write_bench_csv(File::create(p)?, &rows)?,
        None => write_bench_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .with_context(|| format!("reading {}", path.display()))?;
    if &magic == FEATURE_MAGIC {
        let h = read_header(BufReader::new(File::open(path)?))?;
        println!("feature file {}", path.display());
        println!("  version {}", h.version);
        println!("  samples {}", h.n);
        println!("  dimension {}", h.d);
        println!("  dtype {:?}", h.dtype);
    } else if &magic == MODEL_MAGIC {
        let model = load_model(path)?;
        println!("model file {} ({})", path.display(), model.kind().name());
        for line in model.describe() {
            println!("  {line}");
        }
    } else {
        bail!("{} is neither a feature file nor a model file", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::GenSynth(a) => cmd_gen_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Inspect(a) => cmd_inspect(&a.path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
