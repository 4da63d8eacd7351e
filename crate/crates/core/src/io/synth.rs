//! Seeded synthetic fixtures.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::features::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Annulus thickness of the ring classes.
const RING_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthMode {
    /// Unit-variance Gaussian classes with means on a sphere of radius `separation`.
    GaussianBlobs,
    /// Class 1 is a unit Gaussian core; class `c > 1` is uniform on the
    /// annulus `separation * (c - 1) <= r <= separation * (c - 1) + 1` in the
    /// first two coordinates. Remaining coordinates are unit Gaussian noise.
    RingVsCore,
}

impl fmt::Display for SynthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthMode::GaussianBlobs => "gaussian-blobs",
            SynthMode::RingVsCore => "ring-vs-core",
        })
    }
}

impl FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-blobs" => Ok(SynthMode::GaussianBlobs),
            "ring-vs-core" => Ok(SynthMode::RingVsCore),
            other => Err(Error::InvalidArgument(format!(
                "unknown synthetic mode {other:?} (expected gaussian-blobs or ring-vs-core)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub mode: SynthMode,
    pub classes: usize,
    pub per_class: usize,
    pub dims: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_separation() -> f64 {
    8.0
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.per_class < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes of at least 2 samples, got {} x {}",
                self.classes, self.per_class
            )));
        }
        if self.dims == 0 {
            return Err(Error::InvalidArgument("dims must be at least 1".into()));
        }
        if self.mode == SynthMode::RingVsCore && self.dims < 2 {
            return Err(Error::InvalidArgument("ring-vs-core needs dims >= 2".into()));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "separation must be non-negative, got {}",
                self.separation
            )));
        }
        Ok(())
    }
}

/// Samples are grouped by class, labels run `1..=classes`.
pub fn gen_synth(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.classes * spec.per_class;
    let d = spec.dims;
    let mut x = Matrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);

    match spec.mode {
        SynthMode::GaussianBlobs => {
            let means: Vec<Vec<f64>> = (0..spec.classes)
                .map(|_| random_direction(&mut rng, d).into_iter().map(|v| v * spec.separation).collect())
                .collect();
            for (c, mean) in means.iter().enumerate() {
                for k in 0..spec.per_class {
                    let col = x.col_mut(c * spec.per_class + k);
                    for (v, m) in col.iter_mut().zip(mean) {
                        *v = m + rng.sample::<f64, _>(StandardNormal);
                    }
                    labels.push(c as u32 + 1);
                }
            }
        }
        SynthMode::RingVsCore => {
            for c in 0..spec.classes {
                let inner = spec.separation * c as f64;
                let outer = inner + RING_WIDTH;
                for k in 0..spec.per_class {
                    let col = x.col_mut(c * spec.per_class + k);
                    for v in col.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    if c > 0 {
                        // uniform over the annulus area
                        let u: f64 = rng.random();
                        let r = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
                        let theta = rng.random::<f64>() * std::f64::consts::TAU;
                        col[0] = r * theta.cos();
                        col[1] = r * theta.sin();
                    }
                    labels.push(c as u32 + 1);
                }
            }
        }
    }
    Dataset::new(x, labels)
}

fn random_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}
