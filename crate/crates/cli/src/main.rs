use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use gcao::contraction::{ContractionConfig, Variant};
use gcao::dataset::LabelColumn;
use gcao::interop;
use gcao::pipeline::{
    grid_search, parse_f64_list, parse_usize_list, run_benchmark, run_pipeline,
    runtime_report_from_records, write_rows, ClustererSpec, DumpOptions, GridSpec, PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "gcao",
    version,
    about = "Gravitational contraction preprocessing for clustering"
)]
struct Cli {
    /// Threads for the parallel parts of a single run.
    #[arg(long, global = true, env = "GCAO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Contract one dataset, cluster it and report metrics.
    Run(RunArgs),
    /// Sweep k, lambda and iteration counts in parallel.
    Grid(GridArgs),
    /// Time the pipeline on synthetic data of growing size.
    Bench(BenchArgs),
    /// Score a predicted labelling against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with one point per row.
    #[arg(long)]
    data: PathBuf,
    /// Ground-truth column, by zero-based index or header name.
    #[arg(long)]
    label_col: LabelColumn,
    /// The first row holds data, not column names.
    #[arg(long)]
    no_header: bool,
    /// Skip per-feature z-scoring.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long, default_value = "full")]
    variant: Variant,
    /// Clusters for k-means; defaults to the number of classes.
    #[arg(long)]
    kmeans_k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ClusterArgs {
    fn spec(&self) -> ClustererSpec {
        ClustererSpec {
            k: self.kmeans_k,
            restarts: self.restarts,
            seed: self.seed,
            ..ClustererSpec::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0.7)]
    lambda: f64,
    #[arg(long, default_value_t = 9)]
    iters: usize,
    #[command(flatten)]
    cluster: ClusterArgs,
    /// Also report k-means on the uncontracted data.
    #[arg(long)]
    baseline: bool,
    /// Output directory for config, report, results and trace files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, requires = "out")]
    dump_density: bool,
    #[arg(long, requires = "out")]
    dump_groups: bool,
    #[arg(long, requires = "out")]
    dump_coords: bool,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Neighbor counts, `3..20` or `3,5,8`.
    #[arg(long, default_value = "3..20")]
    k: String,
    #[arg(long, default_value = "0.1,0.3,0.7,1.0,2.0")]
    lambda: String,
    #[arg(long, default_value = "1..10")]
    iters: String,
    #[command(flatten)]
    cluster: ClusterArgs,
    /// Grid cells evaluated concurrently.
    #[arg(long, env = "GCAO_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "5000,10000,20000")]
    sizes: String,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0.7)]
    lambda: f64,
    #[arg(long, default_value_t = 9)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// One integer label per line.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    pred: PathBuf,
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn base_config(d: &DataArgs, contraction: ContractionConfig, c: &ClusterArgs) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(contraction.with_variant(c.variant));
    cfg.data = Some(d.data.clone());
    cfg.label_col = Some(d.label_col.clone());
    cfg.has_header = !d.no_header;
    cfg.standardize = !d.no_standardize;
    cfg.clusterer = c.spec();
    cfg
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let mut cfg = base_config(
        &a.data,
        ContractionConfig::new(a.k, a.lambda, a.iters),
        &a.cluster,
    );
    cfg.baseline = a.baseline;
    cfg.out_dir = a.out;
    cfg.dumps = DumpOptions {
        density: a.dump_density,
        groups: a.dump_groups,
        coords: a.dump_coords,
    };
    let record = run_pipeline(&cfg)?;
    emit(&serde_json::to_string_pretty(&record)?)
}

fn grid(a: GridArgs) -> anyhow::Result<()> {
    let grid = GridSpec {
        k: parse_usize_list(&a.k)
            .map_err(anyhow::Error::msg)
            .context("--k")?,
        lambda: parse_f64_list(&a.lambda)
            .map_err(anyhow::Error::msg)
            .context("--lambda")?,
        iterations: parse_usize_list(&a.iters)
            .map_err(anyhow::Error::msg)
            .context("--iters")?,
    };
    let (k0, l0, t0) = (grid.k[0], grid.lambda[0], grid.iterations[0]);
    let mut cfg = base_config(&a.data, ContractionConfig::new(k0, l0, t0), &a.cluster);
    cfg.grid = Some(grid);
    cfg.workers = a.workers;
    cfg.out_dir = a.out;
    let outcome = grid_search(&cfg)?;
    let mut buf = Vec::new();
    write_rows(&outcome.table, &mut buf)?;
    emit(std::str::from_utf8(&buf)?.trim_end())?;
    match outcome.best {
        Some(best) => {
            let c = &best.config.contraction;
            eprintln!(
                "best: k={} lambda={} iterations={} ari={:.4} nmi={:.4}",
                c.k, c.lambda, c.iterations, best.report.ari, best.report.nmi
            );
            Ok(())
        }
        None => bail!("every grid cell failed"),
    }
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let sizes = parse_usize_list(&a.sizes)
        .map_err(anyhow::Error::msg)
        .context("--sizes")?;
    let mut cfg = PipelineConfig::new(ContractionConfig::new(a.k, a.lambda, a.iters));
    cfg.clusterer.restarts = a.restarts;
    cfg.clusterer.seed = a.seed;
    cfg.out_dir = a.out;
    let records = run_benchmark(&sizes, a.dim, &cfg, a.seed)?;
    let report = runtime_report_from_records(&records)?;
    emit(&serde_json::to_string_pretty(&report)?)
}

fn read_labels(path: &PathBuf) -> anyhow::Result<Vec<usize>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse().with_context(|| {
                format!("{}: line {} is not a label: {l:?}", path.display(), i + 1)
            })
        })
        .collect()
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let truth = read_labels(&a.truth)?;
    let pred = read_labels(&a.pred)?;
    let m = interop::evaluate_labels(&truth, &pred)?;
    emit(&serde_json::to_string_pretty(&m)?)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: could not size thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Grid(a) => grid(a),
        Command::Bench(a) => bench(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
