//! Feature files: the `CSFV` binary layout and CSV ingestion.
//!
//! Binary layout (little-endian throughout):
//!
//! | field   | type     |
//! |---------|----------|
//! | magic   | `b"CSFV"`|
//! | version | u32 = 1  |
//! | n       | u64      |
//! | d       | u64      |
//! | dtype   | u8 (0 = f32, 1 = f64) |
//! | payload | n * d values, sample after sample |
//! | labels  | n * u32  |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const FEATURE_MAGIC: &[u8; 4] = b"CSFV";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 1;

/// Samples as columns of a `D x N` matrix with one label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Vec<u32>,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<u32>) -> Result<Self> {
        if x.cols() != labels.len() {
            return Err(Error::dim(format!(
                "{} samples but {} labels",
                x.cols(),
                labels.len()
            )));
        }
        Ok(Self { x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.x.rows()
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_cols(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::UnknownDtype(other)),
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHeader {
    pub version: u32,
    pub n: u64,
    pub d: u64,
    pub dtype: Dtype,
}

impl FeatureHeader {
    pub fn payload_bytes(&self) -> Result<usize> {
        let n = usize::try_from(self.n).map_err(|_| Error::MalformedHeader("n too large".into()))?;
        let d = usize::try_from(self.d).map_err(|_| Error::MalformedHeader("d too large".into()))?;
        n.checked_mul(d)
            .and_then(|nd| nd.checked_mul(self.dtype.width()))
            .and_then(|v| v.checked_add(n.checked_mul(4)?))
            .ok_or_else(|| Error::MalformedHeader(format!("n = {n}, d = {d} overflows")))
    }
}

pub fn write_features<W: Write>(mut w: W, ds: &Dataset, dtype: Dtype) -> Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    w.write_all(&(ds.dims() as u64).to_le_bytes())?;
    w.write_all(&[dtype as u8])?;
    // column-major D x N is already sample after sample
    match dtype {
        Dtype::F64 => {
            for v in ds.x.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Dtype::F32 => {
            for v in ds.x.data() {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    for l in &ds.labels {
        w.write_all(&l.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn parse_header(buf: &[u8]) -> Result<FeatureHeader> {
    if buf.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            buf.len()
        )));
    }
    if &buf[0..4] != FEATURE_MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {:?}", &buf[0..4])));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    Ok(FeatureHeader {
        version,
        n: u64::from_le_bytes(buf[8..16].try_into().unwrap()),
        d: u64::from_le_bytes(buf[16..24].try_into().unwrap()),
        dtype: Dtype::from_byte(buf[24])?,
    })
}

pub fn read_header<R: Read>(mut r: R) -> Result<FeatureHeader> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    r.by_ref().take(HEADER_LEN as u64).read_to_end(&mut buf)?;
    parse_header(&buf)
}

pub fn read_features<R: Read>(mut r: R) -> Result<Dataset> {
    let header = read_header(&mut r)?;
    let expected = header.payload_bytes()?;
    let mut payload = Vec::new();
    r.take(expected as u64).read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let (n, d) = (header.n as usize, header.d as usize);
    let width = header.dtype.width();
    let (values, labels) = payload.split_at(n * d * width);
    let data: Vec<f64> = match header.dtype {
        Dtype::F64 => values
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => values
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
    };
    let labels = labels
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Dataset::new(Matrix::from_col_major(d, n, data)?, labels)
}

fn parse_label(field: &str, row: usize) -> Result<u32> {
    let field = field.trim();
    if let Ok(l) = field.parse::<u32>() {
        return Ok(l);
    }
    match field.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) => Ok(v as u32),
        _ => Err(Error::InvalidArgument(format!(
            "row {row}: label {field:?} is not a non-negative integer"
        ))),
    }
}

/// One sample per row, label in the last column, no header line.
pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut d = None;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "row {row}: need at least one feature and a label"
            )));
        }
        let width = rec.len() - 1;
        if *d.get_or_insert(width) != width {
            return Err(Error::dim(format!("row {row} has {width} features, expected {}", d.unwrap())));
        }
        for f in rec.iter().take(width) {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("row {row}: {f:?} is not a number")))?;
            data.push(v);
        }
        labels.push(parse_label(&rec[width], row)?);
    }
    let d = d.ok_or(Error::EmptyInput("CSV file has no rows"))?;
    let n = labels.len();
    Dataset::new(Matrix::from_col_major(d, n, data)?, labels)
}

pub fn write_csv<W: Write>(w: W, ds: &Dataset) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for j in 0..ds.len() {
        let mut rec: Vec<String> = ds.x.col(j).iter().map(|v| v.to_string()).collect();
        rec.push(ds.labels[j].to_string());
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a `.csv` file or a binary feature file.
pub fn load_features(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_csv(file)
    } else {
        read_features(file)
    }
}

/// Saves a binary feature file, or CSV when the extension is `.csv`.
pub fn save_features(ds: &Dataset, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let file = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_csv(file, ds)
    } else {
        write_features(file, ds, dtype)
    }
}
