//! Tagged model container.
//!
//! `b"CSDM"`, u32 version, then one model record. A record starts with a kind
//! byte (1 linear, 2 kernel, 3 neural bundle, 4 set of records) followed by
//! its fields. Integers are little-endian u32/u64, every parameter is a
//! little-endian f64. Matrices are stored as `rows: u64, cols: u64` and the
//! column-major values; vectors as `len: u64` and the values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelConfig, KernelKind, KernelModel, RefMethod};
use crate::linalg::Matrix;
use crate::linear::LinearModel;
use crate::neural::{DenseLayer, NeuralBundle, NeuralModel};

pub const MODEL_MAGIC: &[u8; 4] = b"CSDM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear = 1,
    Kernel = 2,
    Neural = 3,
    Set = 4,
}

impl ModelKind {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(ModelKind::Linear),
            2 => Ok(ModelKind::Kernel),
            3 => Ok(ModelKind::Neural),
            4 => Ok(ModelKind::Set),
            other => Err(Error::KindMismatch {
                expected: "a model kind byte in 1..=4".into(),
                found: format!("byte {other}"),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Kernel => "kernel",
            ModelKind::Neural => "neural",
            ModelKind::Set => "set",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Linear(LinearModel),
    Kernel(KernelModel),
    Neural(NeuralBundle),
    Set(Vec<SavedModel>),
}

impl SavedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Linear(_) => ModelKind::Linear,
            SavedModel::Kernel(_) => ModelKind::Kernel,
            SavedModel::Neural(_) => ModelKind::Neural,
            SavedModel::Set(_) => ModelKind::Set,
        }
    }

    /// Class ids this model can verify, ascending.
    pub fn class_ids(&self) -> Vec<u32> {
        let mut ids = match self {
            SavedModel::Linear(m) => vec![m.class_id],
            SavedModel::Kernel(m) => vec![m.class_id],
            SavedModel::Neural(b) => b.blocks.keys().copied().collect(),
            SavedModel::Set(items) => items.iter().flat_map(SavedModel::class_ids).collect(),
        };
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Embedding of `x` for class `p` and that class's prototype.
    pub fn embed(&self, p: u32, x: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        match self {
            SavedModel::Linear(m) if m.class_id == p => {
                Ok((crate::linear::project_linear(m, x)?, m.class_mean_embedded.clone()))
            }
            SavedModel::Kernel(m) if m.class_id == p => {
                Ok((crate::kernel::project_kernel(m, x)?, m.class_mean_embedded.clone()))
            }
            SavedModel::Neural(b) => {
                let zbar = b.class_means.get(&p).ok_or(Error::UnknownClass(p))?;
                Ok((b.embed(p, x)?, zbar.clone()))
            }
            SavedModel::Set(items) => items
                .iter()
                .find(|m| m.class_ids().contains(&p))
                .ok_or(Error::UnknownClass(p))?
                .embed(p, x),
            _ => Err(Error::UnknownClass(p)),
        }
    }

    /// One-line summary per record, for inspection.
    pub fn describe(&self) -> Vec<String> {
        match self {
            SavedModel::Linear(m) => vec![format!(
                "linear class {}: D = {}, d = {}, ridge = {:e}",
                m.class_id,
                m.input_dim(),
                m.output_dim(),
                m.ridge
            )],
            SavedModel::Kernel(m) => vec![format!(
                "kernel class {}: {:?} sigma = {}, K = {}, d = {}, ridge = {:e}",
                m.class_id,
                m.kernel.kind,
                m.kernel.sigma,
                m.refs.cols(),
                m.output_dim(),
                m.ridge
            )],
            SavedModel::Neural(b) => vec![format!(
                "neural bundle: D = {}, hidden = {:?}, outputs = {}, classes = {}",
                b.model.input_dim(),
                b.model.layers.iter().map(|l| l.weight.rows()).collect::<Vec<_>>(),
                b.model.output_dim(),
                b.blocks.len()
            )],
            SavedModel::Set(items) => items.iter().flat_map(SavedModel::describe).collect(),
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn vec(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    fn matrix(&mut self, m: &Matrix) {
        self.usize(m.rows());
        self.usize(m.cols());
        m.data().iter().for_each(|&x| self.f64(x));
    }

    fn record(&mut self, model: &SavedModel) {
        self.u8(model.kind() as u8);
        match model {
            SavedModel::Linear(m) => {
                self.u32(m.class_id);
                self.f64(m.ridge);
                self.matrix(&m.w);
                self.vec(&m.class_mean_input);
                self.vec(&m.class_mean_embedded);
            }
            SavedModel::Kernel(m) => {
                self.u32(m.class_id);
                self.f64(m.ridge);
                self.u8(kernel_kind_byte(m.kernel.kind));
                self.f64(m.kernel.sigma);
                self.u8(kernel_kind_byte(m.config.kind));
                match m.config.sigma {
                    Some(s) => {
                        self.u8(1);
                        self.f64(s);
                    }
                    None => {
                        self.u8(0);
                        self.f64(0.0);
                    }
                }
                self.usize(m.config.ref_count);
                self.u8(ref_method_byte(m.config.ref_method));
                self.u64(m.config.seed);
                self.matrix(&m.refs);
                self.matrix(&m.a);
                self.vec(&m.center_shift);
                self.vec(&m.class_mean_embedded);
            }
            SavedModel::Neural(b) => {
                self.usize(b.model.layers.len());
                for l in &b.model.layers {
                    self.matrix(&l.weight);
                    self.vec(&l.bias);
                }
                self.matrix(&b.model.head);
                self.usize(b.blocks.len());
                for (&p, r) in &b.blocks {
                    self.u32(p);
                    self.usize(r.start);
                    self.usize(r.end);
                }
                self.usize(b.class_means.len());
                for (&p, m) in &b.class_means {
                    self.u32(p);
                    self.vec(m);
                }
            }
            SavedModel::Set(items) => {
                self.usize(items.len());
                items.iter().for_each(|m| self.record(m));
            }
        }
    }
}

fn kernel_kind_byte(k: KernelKind) -> u8 {
    match k {
        KernelKind::Rbf => 0,
        KernelKind::Linear => 1,
    }
}

fn ref_method_byte(m: RefMethod) -> u8 {
    match m {
        RefMethod::Kmeans => 0,
        RefMethod::RandomSubset => 1,
        RefMethod::AllTraining => 2,
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::TruncatedPayload {
                expected: self.pos.saturating_add(len),
                found: self.buf.len(),
            }),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::MalformedHeader(format!("length {v} too large")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn values(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| {
            Error::MalformedHeader(format!("length {len} overflows"))
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn vec(&mut self) -> Result<Vec<f64>> {
        let len = self.usize()?;
        self.values(len)
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::MalformedHeader(format!("{rows} x {cols} overflows")))?;
        Matrix::from_col_major(rows, cols, self.values(len)?)
    }

    fn kernel_kind(&mut self) -> Result<KernelKind> {
        match self.u8()? {
            0 => Ok(KernelKind::Rbf),
            1 => Ok(KernelKind::Linear),
            b => Err(Error::MalformedHeader(format!("kernel kind byte {b}"))),
        }
    }

    fn record(&mut self) -> Result<SavedModel> {
        match ModelKind::from_byte(self.u8()?)? {
            ModelKind::Linear => Ok(SavedModel::Linear(LinearModel {
                class_id: self.u32()?,
                ridge: self.f64()?,
                w: self.matrix()?,
                class_mean_input: self.vec()?,
                class_mean_embedded: self.vec()?,
            })),
            ModelKind::Kernel => {
                let class_id = self.u32()?;
                let ridge = self.f64()?;
                let kernel = Kernel {
                    kind: self.kernel_kind()?,
                    sigma: self.f64()?,
                };
                let kind = self.kernel_kind()?;
                let has_sigma = self.u8()? == 1;
                let sigma = self.f64()?;
                let ref_count = self.usize()?;
                let ref_method = match self.u8()? {
                    0 => RefMethod::Kmeans,
                    1 => RefMethod::RandomSubset,
                    2 => RefMethod::AllTraining,
                    b => return Err(Error::MalformedHeader(format!("reference method byte {b}"))),
                };
                let config = KernelConfig {
                    kind,
                    sigma: has_sigma.then_some(sigma),
                    ref_count,
                    ref_method,
                    seed: self.u64()?,
                };
                Ok(SavedModel::Kernel(KernelModel {
                    refs: self.matrix()?,
                    a: self.matrix()?,
                    center_shift: self.vec()?,
                    class_mean_embedded: self.vec()?,
                    kernel,
                    config,
                    class_id,
                    ridge,
                }))
            }
            ModelKind::Neural => {
                let n_layers = self.usize()?;
                let mut layers = Vec::new();
                for _ in 0..n_layers {
                    layers.push(DenseLayer {
                        weight: self.matrix()?,
                        bias: self.vec()?,
                    });
                }
                let head = self.matrix()?;
                let mut blocks = BTreeMap::new();
                for _ in 0..self.usize()? {
                    let p = self.u32()?;
                    let start = self.usize()?;
                    let end = self.usize()?;
                    blocks.insert(p, start..end);
                }
                let mut class_means = BTreeMap::new();
                for _ in 0..self.usize()? {
                    let p = self.u32()?;
                    class_means.insert(p, self.vec()?);
                }
                Ok(SavedModel::Neural(NeuralBundle {
                    model: NeuralModel { layers, head },
                    blocks,
                    class_means,
                }))
            }
            ModelKind::Set => {
                let count = self.usize()?;
                let mut items = Vec::new();
                for _ in 0..count {
                    items.push(self.record()?);
                }
                Ok(SavedModel::Set(items))
            }
        }
    }
}

pub fn encode_model(model: &SavedModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.record(model);
    w.0
}

pub fn decode_model(buf: &[u8]) -> Result<SavedModel> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4).map_err(|_| Error::MalformedHeader("file too short for magic".into()))?;
    if magic != MODEL_MAGIC {
        return Err(Error::MalformedHeader(format!("bad model magic {magic:?}")));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::MalformedHeader(format!("unsupported model version {version}")));
    }
    let model = r.record()?;
    if r.pos != buf.len() {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after the model record",
            buf.len() - r.pos
        )));
    }
    Ok(model)
}

/// Decodes and insists on a particular top-level kind.
pub fn decode_model_as(buf: &[u8], expected: ModelKind) -> Result<SavedModel> {
    let model = decode_model(buf)?;
    if model.kind() != expected {
        return Err(Error::KindMismatch {
            expected: expected.name().into(),
            found: model.kind().name().into(),
        });
    }
    Ok(model)
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    decode_model(&fs::read(path)?)
}

pub fn load_model_as(path: impl AsRef<Path>, expected: ModelKind) -> Result<SavedModel> {
    decode_model_as(&fs::read(path)?, expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> LinearModel {
        LinearModel {
            w: Matrix::from_rows(&[&[1.0, -0.5], &[0.25, 3.0], &[0.0, 1e-300]]),
            class_mean_input: vec![0.1, 0.2, 0.3],
            class_mean_embedded: vec![-1.0, f64::MIN_POSITIVE],
            class_id: 4,
            ridge: 1e-8,
        }
    }

    #[test]
    fn linear_round_trip() {
        let m = SavedModel::Linear(linear());
        assert_eq!(decode_model(&encode_model(&m)).unwrap(), m);
    }

    #[test]
    fn set_round_trip_and_lookup() {
        let mut other = linear();
        other.class_id = 9;
        let set = SavedModel::Set(vec![SavedModel::Linear(linear()), SavedModel::Linear(other)]);
        let back = decode_model(&encode_model(&set)).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.class_ids(), vec![4, 9]);
        assert!(matches!(back.embed(5, &Matrix::zeros(3, 1)), Err(Error::UnknownClass(5))));
    }

    #[test]
    fn wrong_kind_byte() {
        let mut buf = encode_model(&SavedModel::Linear(linear()));
        assert!(matches!(
            decode_model_as(&buf, ModelKind::Kernel),
            Err(Error::KindMismatch { .. })
        ));
        buf[8] = 77;
        assert!(matches!(decode_model(&buf), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn truncation_is_reported() {
        let buf = encode_model(&SavedModel::Linear(linear()));
        let cut = &buf[..buf.len() - 1];
        assert!(matches!(decode_model(cut), Err(Error::TruncatedPayload { .. })));
    }

    #[test]
    fn bad_magic() {
        let mut buf = encode_model(&SavedModel::Linear(linear()));
        buf[3] = b'X';
        assert!(matches!(decode_model(&buf), Err(Error::MalformedHeader(_))));
    }
}
