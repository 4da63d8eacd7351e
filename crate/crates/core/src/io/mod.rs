//! Files, synthetic data, experiment configuration, the experiment runner
//! and the benchmark harness.

pub mod bench;
pub mod config;
pub mod features;
pub mod model_file;
pub mod runner;
pub mod synth;

pub use config::{ExperimentConfig, Method, NeuralSection, WORKERS_ENV};
pub use features::{load_features, read_csv, read_features, save_features, write_features, Dataset, Dtype};
pub use model_file::{load_model, load_model_as, save_model, ModelKind, SavedModel};
pub use runner::{run_experiment, run_experiment_on, ExperimentReport};
pub use synth::{gen_synth, SynthMode, SynthSpec};
