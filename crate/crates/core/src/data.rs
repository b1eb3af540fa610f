//! Datasets: deterministic synthetic generators and CSV ingestion.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{invalid, AlrrError, Result};
use crate::linalg;
use crate::spectral::ClusterLabels;

/// A `d × n` sample matrix; each column is one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    feature_names: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return invalid("data matrix needs at least one feature and one sample");
        }
        if !linalg::all_finite(&values) {
            return invalid("data matrix has non-finite entries");
        }
        Ok(DataMatrix {
            values,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return invalid(format!(
                "{} feature names for {} features",
                names.len(),
                self.dim()
            ));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    /// Builds a matrix from rows of samples (the CSV orientation).
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        let d = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != d) {
            return invalid("samples have differing lengths");
        }
        Self::new(DMatrix::from_fn(d, n, |f, i| samples[i][f]))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Number of features `d`.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Number of samples `n`.
    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: DataMatrix,
    pub labels: Option<ClusterLabels>,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(x: DataMatrix, labels: Option<ClusterLabels>, name: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != x.n_samples() {
                return invalid(format!(
                    "{} labels for {} samples",
                    l.len(),
                    x.n_samples()
                ));
            }
        }
        Ok(LabeledDataset {
            x,
            labels,
            name: name.into(),
        })
    }
}

/// Split `total` into `parts` sizes differing by at most one, larger first.
fn balanced_sizes(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|p| total / parts + usize::from(p < total % parts))
        .collect()
}

/// Interleaved two-dimensional spirals, one per arm.
///
/// Arm `a` samples `t` evenly on `[0.5, 2.5π]` and places the point at
/// `(t cos(t + 2πa/arms), t sin(t + 2πa/arms))` plus isotropic Gaussian noise.
/// Samples are ordered arm by arm.
pub fn make_spiral(n_total: usize, arms: usize, noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    if arms == 0 || n_total < arms {
        return invalid(format!("spiral needs arms >= 1 and n_total >= arms, got arms={arms}, n_total={n_total}"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return invalid(format!("noise_std must be finite and nonnegative, got {noise_std}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_lo, t_hi) = (0.5, 2.5 * PI);
    let mut samples = Vec::with_capacity(n_total);
    let mut labels = Vec::with_capacity(n_total);
    for (arm, count) in balanced_sizes(n_total, arms).into_iter().enumerate() {
        let phase = 2.0 * PI * arm as f64 / arms as f64;
        for i in 0..count {
            let t = if count == 1 {
                t_lo
            } else {
                t_lo + (t_hi - t_lo) * i as f64 / (count - 1) as f64
            };
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            samples.push(vec![
                t * (t + phase).cos() + noise_std * nx,
                t * (t + phase).sin() + noise_std * ny,
            ]);
            labels.push(arm);
        }
    }
    LabeledDataset::new(
        DataMatrix::from_samples(&samples)?.with_feature_names(vec!["x".into(), "y".into()])?,
        Some(ClusterLabels::new(labels, arms)?),
        format!("spiral-{arms}"),
    )
}

/// `k` unit-variance Gaussian clusters in `d` dimensions whose centroids are
/// pairwise at least `separation` apart, followed by `noise_features` rows of
/// standard Gaussian noise carrying no cluster information.
pub fn make_blobs(
    n: usize,
    k: usize,
    d: usize,
    separation: f64,
    noise_features: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if k == 0 || d == 0 || n < k {
        return invalid(format!("blobs need k >= 1, d >= 1 and n >= k, got n={n}, k={k}, d={d}"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return invalid(format!("separation must be finite and nonnegative, got {separation}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids = place_centroids(&mut rng, k, d, separation);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (c, count) in balanced_sizes(n, k).into_iter().enumerate() {
        for _ in 0..count {
            let mut s: Vec<f64> = centroids[c].iter().map(|&m| m + unit.sample(&mut rng)).collect();
            s.extend((0..noise_features).map(|_| unit.sample(&mut rng)));
            samples.push(s);
            labels.push(c);
        }
    }
    let names = (0..d)
        .map(|f| format!("informative{f}"))
        .chain((0..noise_features).map(|f| format!("noise{f}")))
        .collect();
    LabeledDataset::new(
        DataMatrix::from_samples(&samples)?.with_feature_names(names)?,
        Some(ClusterLabels::new(labels, k)?),
        format!("blobs-{k}"),
    )
}

fn place_centroids(rng: &mut ChaCha8Rng, k: usize, d: usize, separation: f64) -> Vec<Vec<f64>> {
    let half_width = separation * k.max(2) as f64 / 2.0;
    for _ in 0..1000 {
        let mut placed: Vec<Vec<f64>> = Vec::with_capacity(k);
        for _ in 0..k * 50 {
            if placed.len() == k {
                break;
            }
            let cand: Vec<f64> = (0..d).map(|_| rng.random_range(-half_width..=half_width)).collect();
            let far_enough = placed.iter().all(|p| {
                p.iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= separation
            });
            if far_enough {
                placed.push(cand);
            }
        }
        if placed.len() == k {
            return placed;
        }
    }
    // Fallback: evenly spaced along the first axis.
    (0..k)
        .map(|c| {
            let mut v = vec![0.0; d];
            v[0] = c as f64 * separation;
            v
        })
        .collect()
}

/// Where the label column of a CSV file lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Header name; requires a header line.
    Name(String),
    /// 1-based column index.
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Digits are read as a 1-based index, anything else as a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Reads a comma-separated file with one sample per line.
///
/// Label values are mapped to dense integers in order of first appearance.
pub fn load_csv(path: &Path, has_header: bool, label_column: Option<&LabelColumn>) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| AlrrError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| AlrrError::Parse {
            line,
            column: 0,
            message: e.to_string(),
        })?;
        let fields: Vec<String> = record.iter().map(str::to_string).collect();
        if has_header && header.is_none() {
            header = Some(fields);
        } else if !(fields.len() == 1 && fields[0].is_empty()) {
            rows.push((line, fields));
        }
    }
    let width = header
        .as_ref()
        .map(Vec::len)
        .or_else(|| rows.first().map(|r| r.1.len()))
        .ok_or_else(|| AlrrError::Parse {
            line: 1,
            column: 0,
            message: "file has no data rows".into(),
        })?;

    let label_idx = match label_column {
        None => None,
        Some(LabelColumn::Index(i)) => {
            if *i == 0 || *i > width {
                return invalid(format!("label column {i} outside 1..={width}"));
            }
            Some(i - 1)
        }
        Some(LabelColumn::Name(name)) => {
            let h = header
                .as_ref()
                .ok_or_else(|| AlrrError::InvalidArgument("label column by name needs a header".into()))?;
            Some(
                h.iter()
                    .position(|c| c == name)
                    .ok_or_else(|| AlrrError::InvalidArgument(format!("no column named {name:?}")))?,
            )
        }
    };

    let mut samples = Vec::with_capacity(rows.len());
    let mut raw_labels = Vec::new();
    for (line, fields) in &rows {
        if fields.len() != width {
            return Err(AlrrError::Parse {
                line: *line,
                column: fields.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        let mut sample = Vec::with_capacity(width);
        for (c, cell) in fields.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(cell.clone());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| AlrrError::Parse {
                line: *line,
                column: c + 1,
                message: format!("non-numeric value {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(AlrrError::Parse {
                    line: *line,
                    column: c + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            sample.push(v);
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(AlrrError::Parse {
            line: 1,
            column: 0,
            message: "file has no data rows".into(),
        });
    }

    let mut x = DataMatrix::from_samples(&samples)?;
    if let Some(h) = header {
        let names = h
            .into_iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != label_idx)
            .map(|(_, name)| name)
            .collect();
        x = x.with_feature_names(names)?;
    }
    let labels = label_idx.map(|_| dense_labels(&raw_labels)).transpose()?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    LabeledDataset::new(x, labels, name)
}

fn dense_labels(raw: &[String]) -> Result<ClusterLabels> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let labels: Vec<usize> = raw
        .iter()
        .map(|r| {
            let next = ids.len();
            *ids.entry(r.as_str()).or_insert(next)
        })
        .collect();
    ClusterLabels::new(labels, ids.len())
}

/// Writes one sample per line, features first and the label (if any) last.
///
/// Values use Rust's shortest round-trip float formatting, so reading the
/// file back with [`load_csv`] reproduces the matrix exactly.
pub fn write_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AlrrError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let x = dataset.x.values();
    let names: Vec<String> = match dataset.x.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..x.nrows()).map(|f| format!("f{f}")).collect(),
    };
    let mut header = names.join(",");
    if dataset.labels.is_some() {
        header.push_str(",label");
    }
    let io = |e| AlrrError::io(path, e);
    writeln!(out, "{header}").map_err(io)?;
    for i in 0..x.ncols() {
        let mut line = x
            .column(i)
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        if let Some(labels) = &dataset.labels {
            line.push_str(&format!(",{}", labels.as_slice()[i]));
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Preprocessing applied before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    /// Scale every sample column to unit Euclidean norm.
    #[default]
    L2,
    /// Map every feature row affinely onto `[0, 1]`.
    MinMax,
    None,
}

impl std::str::FromStr for NormalizeMode {
    type Err = AlrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" | "unit-l2-columns" => Ok(NormalizeMode::L2),
            "minmax" | "min-max-features" => Ok(NormalizeMode::MinMax),
            "none" => Ok(NormalizeMode::None),
            other => invalid(format!("unknown normalization {other:?} (expected l2, minmax or none)")),
        }
    }
}

pub fn normalize(x: &DataMatrix, mode: NormalizeMode) -> DataMatrix {
    let mut values = x.values().clone();
    match mode {
        NormalizeMode::None => {}
        NormalizeMode::L2 => {
            for mut col in values.column_iter_mut() {
                let norm = col.norm();
                if norm > 0.0 {
                    col.unscale_mut(norm);
                }
            }
        }
        NormalizeMode::MinMax => {
            for mut row in values.row_iter_mut() {
                let lo = row.min();
                let hi = row.max();
                let span = hi - lo;
                for v in row.iter_mut() {
                    *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
                }
            }
        }
    }
    DataMatrix {
        values,
        feature_names: x.feature_names.clone(),
    }
}
