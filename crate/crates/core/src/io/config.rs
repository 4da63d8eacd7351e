//! Experiment configuration, read from TOML.
//!
//! ```toml
//! method = "kernel"          # linear | eigen-oracle | kernel | neural
//! data = "faces.csfv"        # or a [synth] table
//! d = 5
//! split_ratio = 0.75
//! seeds = [0, 1, 2]
//!
//! [kernel]
//! ref_count = 500
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::SynthSpec;
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::neural::TrainConfig;

/// Environment variable consulted for the worker count when the config
/// leaves it unset.
pub const WORKERS_ENV: &str = "CSDA_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Linear,
    EigenOracle,
    Kernel,
    Neural,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Linear => "linear",
            Method::EigenOracle => "eigen-oracle",
            Method::Kernel => "kernel",
            Method::Neural => "neural",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Method::Linear),
            "eigen-oracle" => Ok(Method::EigenOracle),
            "kernel" => Ok(Method::Kernel),
            "neural" => Ok(Method::Neural),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected linear, eigen-oracle, kernel or neural)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralSection {
    /// Hidden layer widths; empty means a bare linear head.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_hidden() -> Vec<usize> {
    vec![100]
}

impl Default for NeuralSection {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default = "default_d")]
    pub d: usize,
    /// `None` picks `1e-8 * trace / rows` of the centered training features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    /// One run per seed; the seed drives the split and the targets.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neural: Option<NeuralSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_d() -> usize {
    5
}

fn default_split() -> f64 {
    0.75
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    /// A config for `method` with default hyperparameters and, where the
    /// method needs one, a default section.
    pub fn new(method: Method) -> Self {
        Self {
            method,
            data: None,
            synth: None,
            d: default_d(),
            ridge: None,
            split_ratio: default_split(),
            seeds: default_seeds(),
            kernel: (method == Method::Kernel).then(KernelConfig::default),
            neural: (method == Method::Neural).then(NeuralSection::default),
            workers: None,
            output: None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Adds the section the method needs and drops the ones it does not.
    pub fn normalize_sections(&mut self) {
        match self.method {
            Method::Kernel => {
                self.kernel.get_or_insert_with(KernelConfig::default);
                self.neural = None;
            }
            Method::Neural => {
                self.neural.get_or_insert_with(NeuralSection::default);
                self.kernel = None;
            }
            Method::Linear | Method::EigenOracle => {
                self.kernel = None;
                self.neural = None;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match (&self.data, &self.synth) {
            (Some(_), Some(_)) => return bad("give either `data` or a [synth] table, not both".into()),
            (None, None) => return bad("a `data` path or a [synth] table is required".into()),
            (None, Some(s)) => s.validate()?,
            _ => {}
        }
        let wants_kernel = self.method == Method::Kernel;
        let wants_neural = self.method == Method::Neural;
        if wants_kernel != self.kernel.is_some() {
            return bad(format!(
                "a [kernel] table is {} for method {}",
                if wants_kernel { "required" } else { "not allowed" },
                self.method
            ));
        }
        if wants_neural != self.neural.is_some() {
            return bad(format!(
                "a [neural] table is {} for method {}",
                if wants_neural { "required" } else { "not allowed" },
                self.method
            ));
        }
        if let Some(k) = &self.kernel {
            k.validate()?;
        }
        if let Some(n) = &self.neural {
            n.train.validate()?;
            if n.hidden.contains(&0) {
                return bad("hidden layer widths must be at least 1".into());
            }
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0) || !r.is_finite() {
                return bad(format!("ridge must be non-negative, got {r}"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    /// Worker count: the config value, else `CSDA_WORKERS`, else all cores.
    pub fn effective_workers(&self) -> Result<Option<usize>> {
        if self.workers.is_some() {
            return Ok(self.workers);
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(w) if w > 0 => Ok(Some(w)),
                _ => Err(Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
            },
            Err(_) => Ok(None),
        }
    }
}
