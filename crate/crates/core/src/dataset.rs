//! The ground set: features, model probabilities, labels and fixed features,
//! with CSV / binary file formats and balanced random partitioning.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};

use crate::config::ObjectiveWeights;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Allowed deviation of a probability row sum from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

const MAGIC: &[u8; 4] = b"SMDL";
const FORMAT_VERSION: u32 = 1;

/// Immutable, validated ground set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    probs: Array2<f64>,
    labels: Vec<usize>,
    fixed_features: Option<Array2<f64>>,
}

impl Dataset {
    /// Validate and assemble a dataset from in-memory parts.
    pub fn new(
        features: Array2<f64>,
        probs: Array2<f64>,
        labels: Vec<usize>,
        fixed_features: Option<Array2<f64>>,
    ) -> Result<Self> {
        let n = features.nrows();
        if probs.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "features have {n} rows, probs have {}",
                probs.nrows()
            )));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "features have {n} rows, labels have {}",
                labels.len()
            )));
        }
        if probs.ncols() == 0 {
            return Err(Error::DimensionMismatch("probs have zero columns".into()));
        }
        if let Some(ff) = &fixed_features {
            if ff.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "features have {n} rows, fixed features have {}",
                    ff.nrows()
                )));
            }
            for ((row, col), &value) in ff.indexed_iter() {
                if value < 0.0 || !value.is_finite() {
                    return Err(Error::NegativeFixedFeature { row, col, value });
                }
            }
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature at row {row}, column {col}")));
        }
        for (row, p) in probs.rows().into_iter().enumerate() {
            check_probability_row(row, p)?;
        }
        let classes = probs.ncols();
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange { row, label, classes });
        }
        Ok(Self {
            features,
            probs,
            labels,
            fixed_features,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn n_fixed(&self) -> usize {
        self.fixed_features.as_ref().map_or(0, |f| f.ncols())
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn fixed_features(&self) -> Option<&Array2<f64>> {
        self.fixed_features.as_ref()
    }

    /// Same points with new features and probabilities (e.g. after a model update).
    pub fn with_model_outputs(&self, features: Array2<f64>, probs: Array2<f64>) -> Result<Self> {
        Self::new(features, probs, self.labels.clone(), self.fixed_features.clone())
    }

    pub fn with_fixed_features(self, fixed: Option<Array2<f64>>) -> Result<Self> {
        Self::new(self.features, self.probs, self.labels, fixed)
    }

    /// Weights actually usable on this dataset: without fixed features the
    /// feature-match term is switched off.
    pub fn effective_weights(&self, weights: &ObjectiveWeights) -> ObjectiveWeights {
        let mut w = weights.clone();
        if self.fixed_features.is_none() && w.lambda4 != 0.0 {
            log::warn!("no fixed features loaded; feature-match weight forced to 0");
            w.lambda4 = 0.0;
        }
        w
    }

    /// Write `<prefix>_features`, `_probs`, `_labels.txt` and (if present)
    /// `_fixed` into `dir`.
    pub fn save(&self, dir: &Path, prefix: &str, format: MatrixFormat) -> Result<DatasetPaths> {
        let ext = format.extension();
        let paths = DatasetPaths {
            features: dir.join(format!("{prefix}_features.{ext}")),
            probs: dir.join(format!("{prefix}_probs.{ext}")),
            labels: dir.join(format!("{prefix}_labels.txt")),
            fixed_features: self
                .fixed_features
                .as_ref()
                .map(|_| dir.join(format!("{prefix}_fixed.{ext}"))),
        };
        write_matrix(&paths.features, &self.features, format)?;
        write_matrix(&paths.probs, &self.probs, format)?;
        write_labels(&paths.labels, &self.labels)?;
        if let (Some(p), Some(ff)) = (&paths.fixed_features, &self.fixed_features) {
            write_matrix(p, ff, format)?;
        }
        Ok(paths)
    }
}

fn check_probability_row(row: usize, p: ArrayView1<'_, f64>) -> Result<()> {
    if let Some(&value) = p.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::NegativeProbability { row, value });
    }
    let sum: f64 = p.sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        // rounded so 0.7 + 0.4 reports as 1.1
        let shown = (sum * 1e9).round() / 1e9;
        return Err(Error::ProbabilityRowSum { row, sum: shown });
    }
    Ok(())
}

/// File locations of a saved dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    pub features: PathBuf,
    pub probs: PathBuf,
    pub labels: PathBuf,
    pub fixed_features: Option<PathBuf>,
}

impl DatasetPaths {
    /// Conventional paths under `dir` for `prefix`, picking whichever of
    /// `.bin` / `.csv` exists.
    pub fn discover(dir: &Path, prefix: &str) -> Self {
        let pick = |stem: &str| {
            let bin = dir.join(format!("{prefix}_{stem}.bin"));
            if bin.exists() {
                bin
            } else {
                dir.join(format!("{prefix}_{stem}.csv"))
            }
        };
        let fixed = pick("fixed");
        Self {
            features: pick("features"),
            probs: pick("probs"),
            labels: dir.join(format!("{prefix}_labels.txt")),
            fixed_features: fixed.exists().then_some(fixed),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        load_dataset(
            &self.features,
            &self.probs,
            &self.labels,
            self.fixed_features.as_deref(),
        )
    }
}

/// Load and validate a dataset from files. Matrices may be CSV or the binary
/// `SMDL` format (detected by magic bytes).
pub fn load_dataset(
    features_path: &Path,
    probs_path: &Path,
    labels_path: &Path,
    fixed_features_path: Option<&Path>,
) -> Result<Dataset> {
    let features = read_matrix(features_path)?;
    let probs = read_matrix(probs_path)?;
    let labels = read_labels(labels_path)?;
    let fixed = fixed_features_path.map(read_matrix).transpose()?;
    Dataset::new(features, probs, labels, fixed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Binary => "bin",
        }
    }
}

pub fn write_matrix(path: &Path, m: &Array2<f64>, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Csv => write_matrix_csv(path, m),
        MatrixFormat::Binary => write_matrix_bin(path, m),
    }
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::malformed(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Binary layout: `SMDL`, u32 version, u64 rows, u64 cols, then row-major
/// little-endian f32 values.
pub fn write_matrix_bin(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(MAGIC)?;
    put(&FORMAT_VERSION.to_le_bytes())?;
    put(&(m.nrows() as u64).to_le_bytes())?;
    put(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        put(&(*v as f32).to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        parse_matrix_bin(path, &bytes)
    } else {
        parse_matrix_csv(path, &bytes)
    }
}

fn parse_matrix_bin(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    const HEADER: usize = 4 + 4 + 8 + 8;
    if bytes.len() < HEADER {
        return Err(Error::malformed(path, "truncated header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::malformed(path, format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::malformed(path, "size overflow"))?;
    let body = &bytes[HEADER..];
    if body.len() != expected {
        return Err(Error::malformed(
            path,
            format!("expected {expected} data bytes for {rows}x{cols}, found {}", body.len()),
        ));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::malformed(path, e.to_string()))
}

fn parse_matrix_csv(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::malformed(path, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            // optional header line
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::malformed(path, format!("line {}: {e}", line + 1)));
            }
        };
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(Error::malformed(
                    path,
                    format!("line {} has {} fields, expected {c}", line + 1, values.len()),
                ));
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::malformed(path, e.to_string()))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let label = t
            .parse::<usize>()
            .map_err(|e| Error::malformed(path, format!("line {}: {e}", i + 1)))?;
        labels.push(label);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Shuffle `indices` and cut them into `m` parts whose sizes differ by at most one
/// (the first `len % m` parts get the extra element).
pub fn partition(indices: &[usize], m: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if m == 0 {
        return Err(Error::Config("partition count must be >= 1".into()));
    }
    if m > indices.len() {
        return Err(Error::Config(format!(
            "cannot split {} points into {m} partitions",
            indices.len()
        )));
    }
    let mut order = indices.to_vec();
    rng.shuffle(&mut order);
    let base = order.len() / m;
    let extra = order.len() % m;
    let mut parts = Vec::with_capacity(m);
    let mut rest = order.as_slice();
    for i in 0..m {
        let size = base + usize::from(i < extra);
        let (head, tail) = rest.split_at(size);
        parts.push(head.to_vec());
        rest = tail;
    }
    Ok(parts)
}
