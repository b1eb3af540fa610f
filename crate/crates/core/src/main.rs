use std::path::PathBuf;
use std::process::ExitCode;

use alrr::pipeline::{self, ExportFormat, GraphSource, RunConfig, SweepGrid, SyntheticKind};
use alrr::{AlrrError, NormalizeMode, WeightMode};
use clap::{Args, Parser, Subcommand};

/// Auto-weighted low-rank representation subspace clustering.
#[derive(Parser, Debug)]
#[command(name = "alrr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster one dataset and write run.json and labels.csv.
    Cluster(#[command(flatten)] RunArgs),
    /// Run a λ grid and write one record per cell plus sweep.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated axes to sweep.
        #[arg(long, default_value = "lambda1")]
        grid: String,
        /// Comma-separated values (e.g. `5^-2,0.1`) or `full` for 5^-5..5^5.
        #[arg(long, default_value = "full")]
        grid_values: String,
    },
    /// Write a synthetic dataset with labels as CSV.
    Synth(#[command(flatten)] RunArgs),
    /// Export a learned graph as CSV or PGM.
    ExportGraph {
        #[command(flatten)]
        run: RunArgs,
        /// Export an existing dense CSV matrix instead of running the solver.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Flat TOML config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// The CSV file starts with a header row.
    #[arg(long)]
    header: bool,
    /// Label column name or 1-based index.
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    synthetic: Option<SyntheticKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    arms: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    noise_features: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    #[arg(long)]
    weight_mode: Option<WeightMode>,
    #[arg(long)]
    graph_from: Option<GraphSource>,
    #[arg(long)]
    normalize: Option<NormalizeMode>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    export: Option<ExportFormat>,
    /// Order exported graphs by ground-truth label.
    #[arg(long)]
    permute: bool,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident; $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })*
    };
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, AlrrError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        overlay!(cfg, self; arms, noise_std, clusters, dim, separation, noise_features,
            knn, lambda1, lambda2, lambda3, weight_mode, graph_from, tol, max_iter, seed);
        if self.data.is_some() {
            cfg.data = self.data;
            cfg.synthetic = None;
        }
        if self.synthetic.is_some() {
            cfg.synthetic = self.synthetic;
            cfg.data = None;
        }
        cfg.header |= self.header;
        cfg.permute |= self.permute;
        cfg.label_column = self.label_column.or(cfg.label_column);
        cfg.n = self.n.or(cfg.n);
        cfg.data_seed = self.data_seed.or(cfg.data_seed);
        cfg.k = self.k.or(cfg.k);
        cfg.normalize = self.normalize.or(cfg.normalize);
        cfg.out = self.out.or(cfg.out);
        cfg.export = self.export.or(cfg.export);
        Ok(cfg)
    }
}

fn build_grid(axes: &str, values: &str) -> Result<SweepGrid, AlrrError> {
    let values = pipeline::parse_grid_values(values)?;
    if values.is_empty() {
        return Err(AlrrError::InvalidArgument("grid has no values".into()));
    }
    let mut grid = SweepGrid::default();
    for axis in axes.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match axis {
            "lambda1" => grid.lambda1 = values.clone(),
            "lambda2" => grid.lambda2 = values.clone(),
            "lambda3" => grid.lambda3 = values.clone(),
            other => return Err(AlrrError::InvalidArgument(format!("unknown grid axis {other:?}"))),
        }
    }
    Ok(grid)
}

fn summary(record: &alrr::pipeline::RunRecord) -> String {
    let quality = match record.metrics {
        Some(m) => format!(" acc={:.4} fscore={:.4}", m.acc, m.fscore),
        None => String::new(),
    };
    format!(
        "{} n={} k={} iterations={} converged={}{quality}",
        record.dataset, record.n_samples, record.k, record.iterations, record.converged
    )
}

fn run(cli: Cli) -> Result<(), AlrrError> {
    match cli.command {
        Command::Cluster(args) => {
            let record = pipeline::cmd_cluster(&args.resolve()?)?;
            println!("{}", summary(&record));
        }
        Command::Sweep { run, grid, grid_values } => {
            let grid = build_grid(&grid, &grid_values)?;
            let records = pipeline::cmd_sweep(&run.resolve()?, &grid)?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            println!("{} cells, {failed} failed", records.len());
            if let Some(best) = records.first().filter(|r| r.error.is_none()) {
                println!(
                    "best lambda=({}, {}, {}): {}",
                    best.config.lambda1,
                    best.config.lambda2,
                    best.config.lambda3,
                    summary(best)
                );
            }
        }
        Command::Synth(args) => {
            let path = pipeline::cmd_synth(&args.resolve()?)?;
            println!("{}", path.display());
        }
        Command::ExportGraph { run, graph } => {
            let path = pipeline::cmd_export(&run.resolve()?, graph.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
