//! End-to-end runs: dataset → normalize → solve → symmetrize → Ncut → metrics.
//!
//! These functions back the `alrr` binary. A [`RunConfig`] is a flat set of
//! keys that can come from a TOML file, from command-line flags, or from the
//! `config` echo inside a saved [`RunRecord`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, LabelColumn, LabeledDataset, NormalizeMode};
use crate::error::{invalid, AlrrError, Result};
use crate::graph;
use crate::metrics::{self, MetricsReport};
use crate::solver::{self, Hyperparams, WeightMode};
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Spiral,
    Blobs,
}

impl std::str::FromStr for SyntheticKind {
    type Err = AlrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spiral" => Ok(SyntheticKind::Spiral),
            "blobs" => Ok(SyntheticKind::Blobs),
            other => invalid(format!("unknown synthetic dataset {other:?} (expected spiral or blobs)")),
        }
    }
}

/// Which learned graph is handed to Ncut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphSource {
    #[default]
    Z,
    S,
}

impl std::str::FromStr for GraphSource {
    type Err = AlrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" | "Z" => Ok(GraphSource::Z),
            "s" | "S" => Ok(GraphSource::S),
            other => invalid(format!("unknown graph source {other:?} (expected z or s)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Pgm,
}

impl std::str::FromStr for ExportFormat {
    type Err = AlrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "pgm" => Ok(ExportFormat::Pgm),
            other => invalid(format!("unknown export format {other:?} (expected csv or pgm)")),
        }
    }
}

/// Everything needed to reproduce one run.
///
/// Unset optional keys fall back to defaults at resolution time; see
/// [`RunConfig::hyperparams`] and [`RunConfig::normalization`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    /// CSV input; mutually exclusive with `synthetic`.
    pub data: Option<PathBuf>,
    pub header: bool,
    /// Label column: header name or 1-based index.
    pub label_column: Option<String>,
    pub synthetic: Option<SyntheticKind>,
    /// Synthetic sample count (spiral default 393, blobs default 60).
    pub n: Option<usize>,
    pub arms: usize,
    pub noise_std: f64,
    /// Number of generated blobs.
    pub clusters: usize,
    /// Informative dimensions of generated blobs.
    pub dim: usize,
    pub separation: f64,
    pub noise_features: usize,
    /// Generator seed; defaults to `seed`.
    pub data_seed: Option<u64>,

    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Cluster count; defaults to the number of ground-truth classes, else 2.
    pub k: Option<usize>,
    pub knn: usize,
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub weight_mode: WeightMode,

    /// Defaults to `l2` for CSV data and `minmax` for the synthetic generators.
    pub normalize: Option<NormalizeMode>,
    pub graph_from: GraphSource,
    pub out: Option<PathBuf>,
    pub export: Option<ExportFormat>,
    /// Order exported graphs by ground-truth label.
    pub permute: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = Hyperparams::default();
        RunConfig {
            data: None,
            header: false,
            label_column: None,
            synthetic: None,
            n: None,
            arms: 3,
            noise_std: 0.05,
            clusters: 2,
            dim: 2,
            separation: 10.0,
            noise_features: 4,
            data_seed: None,
            lambda1: h.lambda1,
            lambda2: h.lambda2,
            lambda3: h.lambda3,
            k: None,
            knn: h.k_nn,
            mu0: h.mu0,
            rho: h.rho,
            mu_max: h.mu_max,
            tol: h.tol,
            max_iter: h.max_iter,
            seed: h.seed,
            weight_mode: h.weight_mode,
            normalize: None,
            graph_from: GraphSource::Z,
            out: None,
            export: None,
            permute: false,
        }
    }
}

impl RunConfig {
    /// Parses a flat TOML key-value file.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|span| line_col(text, span.start))
                .unwrap_or((0, 0));
            AlrrError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AlrrError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn hyperparams(&self, dataset: &LabeledDataset) -> Hyperparams {
        let k = self
            .k
            .or_else(|| dataset.labels.as_ref().map(|l| l.k()))
            .unwrap_or(2)
            .max(1);
        Hyperparams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            k,
            k_nn: self.knn,
            mu0: self.mu0,
            rho: self.rho,
            mu_max: self.mu_max,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            weight_mode: self.weight_mode,
        }
    }

    pub fn normalization(&self) -> NormalizeMode {
        self.normalize.unwrap_or(if self.synthetic.is_some() {
            NormalizeMode::MinMax
        } else {
            NormalizeMode::L2
        })
    }

    /// Generates or loads the configured dataset.
    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        let data_seed = self.data_seed.unwrap_or(self.seed);
        match (&self.data, self.synthetic) {
            (Some(_), Some(_)) => invalid("give either --data or --synthetic, not both"),
            (None, None) => invalid("no dataset: give --data FILE or --synthetic {spiral,blobs}"),
            (Some(path), None) => {
                let label = self.label_column.as_deref().map(|s| s.parse::<LabelColumn>().expect("infallible"));
                data::load_csv(path, self.header, label.as_ref())
            }
            (None, Some(SyntheticKind::Spiral)) => {
                data::make_spiral(self.n.unwrap_or(393), self.arms, self.noise_std, data_seed)
            }
            (None, Some(SyntheticKind::Blobs)) => data::make_blobs(
                self.n.unwrap_or(60),
                self.clusters,
                self.dim,
                self.separation,
                self.noise_features,
                data_seed,
            ),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

/// Outcome of one pipeline run, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Echo of the configuration that produced this record.
    pub config: RunConfig,
    pub dataset: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub k: usize,
    /// Absent when the dataset has no labels or the run failed.
    pub metrics: Option<MetricsReport>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_secs: f64,
    pub objective_trace: Vec<f64>,
    pub final_residuals: Option<[f64; 3]>,
    pub feature_weights: Vec<f64>,
    pub labels: Vec<usize>,
    /// Set when the run failed; every other result field is then empty.
    pub error: Option<String>,
}

impl RunRecord {
    fn failed(config: &RunConfig, dataset: &LabeledDataset, k: usize, err: &AlrrError) -> Self {
        RunRecord {
            config: config.clone(),
            dataset: dataset.name.clone(),
            n_samples: dataset.x.n_samples(),
            n_features: dataset.x.dim(),
            k,
            metrics: None,
            iterations: 0,
            converged: false,
            wall_time_secs: 0.0,
            objective_trace: Vec::new(),
            final_residuals: None,
            feature_weights: Vec::new(),
            labels: Vec::new(),
            error: Some(err.to_string()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| AlrrError::InvalidArgument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AlrrError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// A finished run: the record plus the graph that was clustered.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub graph: DMatrix<f64>,
}

/// Runs the pipeline on an already loaded dataset without touching the disk.
pub fn run_on(config: &RunConfig, dataset: &LabeledDataset) -> Result<RunOutput> {
    let params = config.hyperparams(dataset);
    let x = data::normalize(&dataset.x, config.normalization());
    let started = Instant::now();
    let result = solver::solve(x.values(), &params)?;
    let graph = match config.graph_from {
        GraphSource::Z => result.w.into_values(),
        GraphSource::S => graph::symmetrize(result.s.values())?.into_values(),
    };
    let labels = spectral::ncut(&graph, params.k, params.seed)?;
    let wall_time_secs = started.elapsed().as_secs_f64();
    let metrics = dataset
        .labels
        .as_ref()
        .map(|truth| metrics::evaluate(&labels, truth))
        .transpose()?;
    let record = RunRecord {
        config: config.clone(),
        dataset: dataset.name.clone(),
        n_samples: dataset.x.n_samples(),
        n_features: dataset.x.dim(),
        k: params.k,
        metrics,
        iterations: result.iterations,
        converged: result.converged,
        wall_time_secs,
        objective_trace: result.objective_trace,
        final_residuals: result.residual_trace.last().copied(),
        feature_weights: result.a.as_slice().to_vec(),
        labels: labels.as_slice().to_vec(),
        error: None,
    };
    Ok(RunOutput { record, graph })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AlrrError::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| AlrrError::io(path, e))
}

/// Sample order for exports: stable sort by ground-truth label when asked.
fn export_order(config: &RunConfig, dataset: &LabeledDataset) -> Option<Vec<usize>> {
    if !config.permute {
        return None;
    }
    dataset.labels.as_ref().map(|l| {
        let mut idx: Vec<usize> = (0..l.len()).collect();
        idx.sort_by_key(|&i| l.as_slice()[i]);
        idx
    })
}

/// `cluster`: one full run, writing `run.json`, `labels.csv` and optionally
/// the clustered graph into the output directory.
pub fn cmd_cluster(config: &RunConfig) -> Result<RunRecord> {
    let dataset = config.load_dataset()?;
    let output = run_on(config, &dataset)?;
    if let Some(out) = &config.out {
        ensure_dir(out)?;
        write_file(&out.join("run.json"), output.record.to_json()?.as_bytes())?;
        let labels: String = output.record.labels.iter().map(|l| format!("{l}\n")).collect();
        write_file(&out.join("labels.csv"), labels.as_bytes())?;
        if let Some(format) = config.export {
            let order = export_order(config, &dataset);
            cmd_export_graph(&output.graph, &out.join(graph_file_name(format)), format, order.as_deref())?;
        }
    }
    Ok(output.record)
}

pub fn graph_file_name(format: ExportFormat) -> &'static str {
    match format {
        ExportFormat::Csv => "graph.csv",
        ExportFormat::Pgm => "graph.pgm",
    }
}

/// The λ grid used when no explicit values are given: `5^-5, …, 5^5`.
pub fn full_grid() -> Vec<f64> {
    (-5..=5).map(|e| 5f64.powi(e)).collect()
}

/// Values to sweep per λ; an empty axis keeps the configured value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
}

impl SweepGrid {
    pub fn cells(&self, base: &RunConfig) -> Vec<(f64, f64, f64)> {
        let axis = |v: &Vec<f64>, fallback: f64| if v.is_empty() { vec![fallback] } else { v.clone() };
        let l1 = axis(&self.lambda1, base.lambda1);
        let l2 = axis(&self.lambda2, base.lambda2);
        let l3 = axis(&self.lambda3, base.lambda3);
        let mut cells = Vec::with_capacity(l1.len() * l2.len() * l3.len());
        for &a in &l1 {
            for &b in &l2 {
                for &c in &l3 {
                    cells.push((a, b, c));
                }
            }
        }
        cells
    }

    pub fn is_empty(&self) -> bool {
        self.lambda1.is_empty() && self.lambda2.is_empty() && self.lambda3.is_empty()
    }
}

/// Parses `"0.04,5^-2,1e-3"`; the literal `full` expands to [`full_grid`].
pub fn parse_grid_values(text: &str) -> Result<Vec<f64>> {
    if text.trim() == "full" {
        return Ok(full_grid());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if let Some((base, exp)) = s.split_once('^') {
                let b: f64 = base.parse().map_err(|_| AlrrError::InvalidArgument(format!("bad grid value {s:?}")))?;
                let e: i32 = exp.parse().map_err(|_| AlrrError::InvalidArgument(format!("bad grid value {s:?}")))?;
                Ok(b.powi(e))
            } else {
                s.parse().map_err(|_| AlrrError::InvalidArgument(format!("bad grid value {s:?}")))
            }
        })
        .collect()
}

/// `sweep`: every grid cell on one shared dataset, cells in parallel.
///
/// Failed cells are kept as records with `error` set. Records come back
/// sorted by ACC (best first, failures last); the output directory gets one
/// JSON per cell, `sweep.csv` and `best.json`.
pub fn cmd_sweep(config: &RunConfig, grid: &SweepGrid) -> Result<Vec<RunRecord>> {
    if grid.is_empty() {
        return invalid("sweep grid is empty");
    }
    let dataset = config.load_dataset()?;
    let cells = grid.cells(config);
    let mut records: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(lambda1, lambda2, lambda3)| {
            let cell = RunConfig {
                lambda1,
                lambda2,
                lambda3,
                out: None,
                ..config.clone()
            };
            match run_on(&cell, &dataset) {
                Ok(output) => output.record,
                Err(err) => {
                    log::warn!("sweep cell ({lambda1}, {lambda2}, {lambda3}) failed: {err}");
                    RunRecord::failed(&cell, &dataset, cell.hyperparams(&dataset).k, &err)
                }
            }
        })
        .collect();
    records.sort_by(|a, b| sweep_score(b).total_cmp(&sweep_score(a)));

    if let Some(out) = &config.out {
        ensure_dir(out)?;
        let runs = out.join("runs");
        ensure_dir(&runs)?;
        for (i, r) in records.iter().enumerate() {
            write_file(&runs.join(format!("run-{i:04}.json")), r.to_json()?.as_bytes())?;
        }
        write_file(&out.join("sweep.csv"), sweep_table(&records).as_bytes())?;
        if let Some(best) = records.first() {
            write_file(&out.join("best.json"), best.to_json()?.as_bytes())?;
        }
    }
    Ok(records)
}

fn sweep_score(r: &RunRecord) -> f64 {
    match (&r.error, &r.metrics) {
        (Some(_), _) => f64::NEG_INFINITY,
        (None, Some(m)) => m.acc,
        (None, None) => -1.0,
    }
}

/// The aggregate CSV written by [`cmd_sweep`].
pub fn sweep_table(records: &[RunRecord]) -> String {
    let mut out = String::from("lambda1,lambda2,lambda3,acc,fscore,iterations,converged,wall_time_secs,status\n");
    for r in records {
        let (acc, f) = r
            .metrics
            .map(|m| (m.acc.to_string(), m.fscore.to_string()))
            .unwrap_or_default();
        let status = match &r.error {
            Some(e) => format!("failed: {}", e.replace([',', '\n'], ";")),
            None => "ok".into(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3},{}\n",
            r.config.lambda1, r.config.lambda2, r.config.lambda3, acc, f, r.iterations, r.converged, r.wall_time_secs, status
        ));
    }
    out
}

/// Writes a graph as a dense CSV matrix or an 8-bit binary PGM image.
///
/// PGM pixels are `round(255 · w_ij / max(W))`, all black when `max(W) = 0`.
/// `order`, when given, permutes rows and columns together.
pub fn cmd_export_graph(w: &DMatrix<f64>, path: &Path, format: ExportFormat, order: Option<&[usize]>) -> Result<()> {
    let n = w.nrows();
    if !w.is_square() {
        return invalid("exported graph must be square");
    }
    let identity: Vec<usize> = (0..n).collect();
    let order = order.unwrap_or(&identity);
    if order.len() != n {
        return invalid(format!("export order has {} entries for {n} samples", order.len()));
    }
    let bytes = match format {
        ExportFormat::Csv => {
            let mut s = String::new();
            for &i in order {
                let row: Vec<String> = order.iter().map(|&j| w[(i, j)].to_string()).collect();
                s.push_str(&row.join(","));
                s.push('\n');
            }
            s.into_bytes()
        }
        ExportFormat::Pgm => {
            let peak = w.iter().copied().fold(0.0_f64, f64::max);
            let mut buf = format!("P5\n{n} {n}\n255\n").into_bytes();
            for &i in order {
                for &j in order {
                    let px = if peak > 0.0 {
                        (255.0 * w[(i, j)].max(0.0) / peak).round().clamp(0.0, 255.0) as u8
                    } else {
                        0
                    };
                    buf.push(px);
                }
            }
            buf
        }
    };
    let mut file = fs::File::create(path).map_err(|e| AlrrError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| AlrrError::io(path, e))
}

/// Reads a dense square matrix from a header-less CSV file.
pub fn read_graph_csv(path: &Path) -> Result<DMatrix<f64>> {
    let ds = data::load_csv(path, false, None)?;
    // load_csv puts samples (file rows) in columns.
    let w = ds.x.values().transpose();
    if !w.is_square() {
        return invalid(format!("graph file is {}x{}, not square", w.nrows(), w.ncols()));
    }
    Ok(w)
}

/// `export-graph`: exports a stored graph, or runs the pipeline and exports
/// the graph it clustered. Returns the written path.
pub fn cmd_export(config: &RunConfig, graph_file: Option<&Path>) -> Result<PathBuf> {
    let format = config.export.unwrap_or(ExportFormat::Pgm);
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&out)?;
    let path = out.join(graph_file_name(format));
    match graph_file {
        Some(file) => {
            let w = read_graph_csv(file)?;
            cmd_export_graph(&w, &path, format, None)?;
        }
        None => {
            let dataset = config.load_dataset()?;
            let output = run_on(config, &dataset)?;
            let order = export_order(config, &dataset);
            cmd_export_graph(&output.graph, &path, format, order.as_deref())?;
        }
    }
    Ok(path)
}

/// `synth`: writes the configured synthetic dataset (with labels) to
/// `<out>/<name>.csv` and returns that path.
pub fn cmd_synth(config: &RunConfig) -> Result<PathBuf> {
    if config.synthetic.is_none() {
        return invalid("synth needs --synthetic {spiral,blobs}");
    }
    let dataset = config.load_dataset()?;
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&out)?;
    let path = out.join(format!("{}.csv", dataset.name));
    data::write_csv(&dataset, &path)?;
    Ok(path)
}

/// Process exit code for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &AlrrError) -> i32 {
    match err {
        AlrrError::NumericalFailure { .. } => 2,
        _ => 1,
    }
}
