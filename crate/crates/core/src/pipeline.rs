//! End-to-end runs: load, standardize, contract, cluster, score.
//!
//! Also hosts the parallel parameter grid and the runtime scaling report.
//! Every failure is tagged with the [`Stage`] it happened in.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contraction::{run_gcao, ContractionConfig, ContractionError, GcaoOutput, Variant};
use crate::dataset::{
    load_csv, make_blobs, save_csv, standardize, BlobSpec, DatasetError, LabelColumn, PointSet,
};
use crate::evaluation::{evaluate, EvaluationReport, MetricError, Metrics, StageTimings};
pub use crate::kmeans::{kmeans, kmeans_fit, KMeansConfig, KMeansError, KMeansResult};

/// Documented search ranges; grid values outside them only trigger a warning.
pub const K_RANGE: (usize, usize) = (3, 20);
pub const LAMBDA_RANGE: (f64, f64) = (0.1, 2.0);
pub const ITERATION_RANGE: (usize, usize) = (1, 10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Load,
    Standardize,
    Density,
    Grouping,
    Contraction,
    Clustering,
    Metrics,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Standardize => "standardize",
            Stage::Density => "density",
            Stage::Grouping => "grouping",
            Stage::Contraction => "contraction",
            Stage::Clustering => "clustering",
            Stage::Metrics => "metrics",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Contraction(#[from] ContractionError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {error}")]
pub struct PipelineError {
    pub stage: Stage,
    pub error: StageError,
}

impl PipelineError {
    pub fn new(stage: Stage, source: impl Into<StageError>) -> Self {
        Self {
            stage,
            error: source.into(),
        }
    }

    fn invalid(stage: Stage, msg: impl Into<String>) -> Self {
        Self::new(stage, StageError::Invalid(msg.into()))
    }
}

fn contraction_failure(e: ContractionError) -> PipelineError {
    let stage = match e {
        ContractionError::InvalidConfig(_)
        | ContractionError::TooFewPoints(_)
        | ContractionError::KTooLarge { .. } => Stage::Config,
        ContractionError::Density(_) => Stage::Density,
        ContractionError::Index(_) => Stage::Contraction,
    };
    PipelineError::new(stage, e)
}

/// Downstream clusterer settings. Only k-means is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustererSpec {
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    /// Number of clusters; the number of ground-truth classes when unset.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_algorithm() -> String {
    "kmeans".into()
}

fn default_restarts() -> usize {
    10
}

fn default_max_iter() -> usize {
    300
}

impl Default for ClustererSpec {
    fn default() -> Self {
        Self {
            algorithm: default_algorithm(),
            k: None,
            restarts: default_restarts(),
            max_iter: default_max_iter(),
            seed: 0,
        }
    }
}

/// Lists of values to sweep. The full cross product is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k: Vec<usize>,
    pub lambda: Vec<f64>,
    pub iterations: Vec<usize>,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.k.len() * self.lambda.len() * self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in `k`, then `lambda`, then `iterations` order.
    pub fn cells(&self) -> Vec<(usize, f64, usize)> {
        let mut out = Vec::with_capacity(self.len());
        for &k in &self.k {
            for &l in &self.lambda {
                for &t in &self.iterations {
                    out.push((k, l, t));
                }
            }
        }
        out
    }

    /// Human-readable notes for values outside the documented ranges.
    pub fn range_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        for &k in &self.k {
            if k < K_RANGE.0 || k > K_RANGE.1 {
                w.push(format!("k={k} outside [{}, {}]", K_RANGE.0, K_RANGE.1));
            }
        }
        for &l in &self.lambda {
            if !(LAMBDA_RANGE.0..=LAMBDA_RANGE.1).contains(&l) {
                w.push(format!(
                    "lambda={l} outside [{}, {}]",
                    LAMBDA_RANGE.0, LAMBDA_RANGE.1
                ));
            }
        }
        for &t in &self.iterations {
            if t < ITERATION_RANGE.0 || t > ITERATION_RANGE.1 {
                w.push(format!(
                    "iterations={t} outside [{}, {}]",
                    ITERATION_RANGE.0, ITERATION_RANGE.1
                ));
            }
        }
        w
    }
}

/// Parses `"3..20"` (inclusive) or `"3,5,9"`.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a
            .trim()
            .parse()
            .map_err(|e| format!("bad range start {a:?}: {e}"))?;
        let hi: usize = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|e| format!("bad range end {b:?}: {e}"))?;
        if lo > hi {
            return Err(format!("empty range {s:?}"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|e| format!("bad integer {v:?}: {e}"))
        })
        .collect()
}

/// Parses `"0.1,0.3,0.7"`.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|e| format!("bad number {v:?}: {e}"))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpOptions {
    /// Per-point densities (`density.csv`).
    #[serde(default)]
    pub density: bool,
    /// Group assignment (`groups.csv`).
    #[serde(default)]
    pub groups: bool,
    /// Contracted coordinates at full precision (`contracted.csv`).
    #[serde(default)]
    pub coords: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// CSV input. Unused when points are supplied directly.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub label_col: Option<LabelColumn>,
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default = "default_true")]
    pub standardize: bool,
    pub contraction: ContractionConfig,
    #[serde(default)]
    pub clusterer: ClustererSpec,
    /// Also cluster the uncontracted data for comparison.
    #[serde(default)]
    pub baseline: bool,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dumps: DumpOptions,
    /// Name written to result rows; the file stem of `data` when unset.
    #[serde(default)]
    pub dataset_name: Option<String>,
}

fn default_true() -> bool {
    true
}

fn default_workers() -> usize {
    1
}

impl PipelineConfig {
    pub fn new(contraction: ContractionConfig) -> Self {
        Self {
            data: None,
            label_col: None,
            has_header: true,
            standardize: true,
            contraction,
            clusterer: ClustererSpec::default(),
            baseline: false,
            grid: None,
            workers: 1,
            out_dir: None,
            dumps: DumpOptions::default(),
            dataset_name: None,
        }
    }

    pub fn dataset_label(&self) -> String {
        self.dataset_name
            .clone()
            .or_else(|| {
                self.data
                    .as_ref()
                    .and_then(|p| p.file_stem())
                    .map(|s| s.to_string_lossy().into_owned())
            })
            .unwrap_or_else(|| "in-memory".into())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.contraction.validate().map_err(contraction_failure)?;
        if self.clusterer.algorithm != "kmeans" {
            return Err(PipelineError::invalid(
                Stage::Config,
                format!(
                    "unknown clusterer {:?} (only kmeans)",
                    self.clusterer.algorithm
                ),
            ));
        }
        if self.clusterer.k == Some(0) {
            return Err(PipelineError::invalid(
                Stage::Config,
                "clusterer K must be >= 1",
            ));
        }
        if self.clusterer.restarts == 0 {
            return Err(PipelineError::invalid(
                Stage::Config,
                "restarts must be >= 1",
            ));
        }
        if self.workers == 0 {
            return Err(PipelineError::invalid(
                Stage::Config,
                "workers must be >= 1",
            ));
        }
        if let Some(g) = &self.grid {
            if g.is_empty() {
                return Err(PipelineError::invalid(Stage::Config, "grid has no cells"));
            }
        }
        Ok(())
    }
}

/// Short description of the contraction run stored with each record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations_run: usize,
    pub final_max_disp: f64,
    pub radius: f64,
    pub rho_dagger: f64,
    pub low_density: usize,
    pub groups: usize,
    pub grouped_points: usize,
    pub warning: Option<String>,
}

impl TraceSummary {
    fn from_output(out: &GcaoOutput) -> Self {
        Self {
            iterations_run: out.trace.steps.len(),
            final_max_disp: out.trace.steps.last().map_or(0.0, |s| s.max_disp),
            radius: out.profile.r,
            rho_dagger: out.profile.rho_dagger,
            low_density: out.profile.low_density_ids.len(),
            groups: out.partition.len(),
            grouped_points: out.partition.grouped_count(),
            warning: out.trace.warning.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: PipelineConfig,
    pub dataset: String,
    pub n: usize,
    pub dim: usize,
    /// Clusters requested from k-means.
    pub kmeans_k: usize,
    pub report: EvaluationReport,
    /// Metrics of k-means on the uncontracted data, when requested.
    pub baseline: Option<Metrics>,
    pub trace: TraceSummary,
    /// Unix seconds.
    pub started_at: f64,
    pub finished_at: f64,
    #[serde(skip)]
    pub predicted: Vec<usize>,
    #[serde(skip)]
    pub output: Option<GcaoOutput>,
}

impl RunRecord {
    pub fn row(&self) -> ResultRow {
        let c = &self.config.contraction;
        ResultRow {
            dataset: self.dataset.clone(),
            variant: c.variant,
            k: c.k,
            lambda: c.lambda,
            iterations: c.iterations,
            kmeans_k: Some(self.kmeans_k),
            seed: self.config.clusterer.seed,
            nmi: Some(self.report.nmi),
            ari: Some(self.report.ari),
            homogeneity: Some(self.report.homogeneity),
            acc: Some(self.report.acc),
            seconds: self.report.timings.total(),
            error: None,
        }
    }
}

/// One line of `results.csv` / `grid.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub variant: Variant,
    pub k: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub kmeans_k: Option<usize>,
    pub seed: u64,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub homogeneity: Option<f64>,
    pub acc: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

pub fn write_rows<W: std::io::Write>(rows: &[ResultRow], w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Reads the configured CSV. Returns the points and the seconds spent.
pub fn load_points(cfg: &PipelineConfig) -> Result<(PointSet, f64), PipelineError> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| PipelineError::invalid(Stage::Config, "no data path given"))?;
    let t = Instant::now();
    let ps = load_csv(path, cfg.label_col.as_ref(), cfg.has_header)
        .map_err(|e| PipelineError::new(Stage::Load, e))?;
    Ok((ps, t.elapsed().as_secs_f64()))
}

fn cluster(ps: &PointSet, spec: &ClustererSpec, k: usize) -> Result<Vec<usize>, PipelineError> {
    let cfg = KMeansConfig {
        k,
        restarts: spec.restarts,
        max_iter: spec.max_iter,
        seed: spec.seed,
    };
    kmeans_fit(ps, &cfg)
        .map(|r| r.labels)
        .map_err(|e| PipelineError::new(Stage::Clustering, e))
}

/// The full chain on already-loaded points. `load_seconds` is copied into the
/// report timings.
pub fn run_on_points(
    raw: &PointSet,
    cfg: &PipelineConfig,
    load_seconds: f64,
) -> Result<RunRecord, PipelineError> {
    cfg.validate()?;
    let started_at = unix_now();
    let mut timings = StageTimings {
        load: load_seconds,
        ..StageTimings::default()
    };
    let truth = raw
        .labels()
        .ok_or_else(|| PipelineError::invalid(Stage::Load, "ground-truth labels are required"))?;
    let kmeans_k = match cfg.clusterer.k {
        Some(k) => k,
        None => raw.n_classes().unwrap_or(1),
    };

    let t = Instant::now();
    let prepared = if cfg.standardize {
        standardize(raw).map_err(|e| PipelineError::new(Stage::Standardize, e))?
    } else {
        raw.clone()
    };
    timings.standardize = t.elapsed().as_secs_f64();

    let out = run_gcao(&prepared, &cfg.contraction).map_err(contraction_failure)?;
    timings.density = out.timings.density;
    timings.grouping = out.timings.grouping;
    timings.contraction = out.timings.contraction;

    let t = Instant::now();
    let predicted = cluster(&out.points, &cfg.clusterer, kmeans_k)?;
    timings.clustering = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let metrics = evaluate(truth, &predicted).map_err(|e| PipelineError::new(Stage::Metrics, e))?;
    timings.metrics = t.elapsed().as_secs_f64();

    let baseline = if cfg.baseline {
        let raw_pred = cluster(&prepared, &cfg.clusterer, kmeans_k)?;
        Some(evaluate(truth, &raw_pred).map_err(|e| PipelineError::new(Stage::Metrics, e))?)
    } else {
        None
    };

    let record = RunRecord {
        config: cfg.clone(),
        dataset: cfg.dataset_label(),
        n: raw.len(),
        dim: raw.dim(),
        kmeans_k,
        report: EvaluationReport::new(metrics, timings),
        baseline,
        trace: TraceSummary::from_output(&out),
        started_at,
        finished_at: unix_now(),
        predicted,
        output: Some(out),
    };
    tracing::info!(
        dataset = %record.dataset,
        ari = record.report.ari,
        nmi = record.report.nmi,
        "run finished"
    );
    if let Some(dir) = &cfg.out_dir {
        write_run_outputs(dir, &record).map_err(|e| PipelineError::new(Stage::Output, e))?;
    }
    Ok(record)
}

/// Load the configured CSV and run the chain on it.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunRecord, PipelineError> {
    cfg.validate()?;
    let (ps, secs) = load_points(cfg)?;
    run_on_points(&ps, cfg, secs)
}

/// Writes `config.json`, `report.json`, `results.csv`, `trace.csv` and any
/// requested dumps into `dir`.
pub fn write_run_outputs(dir: &Path, record: &RunRecord) -> Result<(), StageError> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&record.config)?,
    )?;
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(record)?,
    )?;
    write_rows(&[record.row()], fs::File::create(dir.join("results.csv"))?)?;
    let Some(out) = &record.output else {
        return Ok(());
    };
    out.trace
        .write_csv(fs::File::create(dir.join("trace.csv"))?)?;
    let dumps = record.config.dumps;
    if dumps.density {
        let mut w = csv::Writer::from_path(dir.join("density.csv"))?;
        w.write_record(["id", "rho", "class"])?;
        for (i, rho) in out.profile.rho.iter().enumerate() {
            let class = format!("{:?}", out.profile.class_of(i)).to_lowercase();
            w.write_record([i.to_string(), rho.to_string(), class])?;
        }
        w.flush()?;
    }
    if dumps.groups {
        let mut w = csv::Writer::from_path(dir.join("groups.csv"))?;
        w.write_record(["id", "group", "role"])?;
        for (i, g) in out.partition.assignment.iter().enumerate() {
            let (group, role) = match g {
                Some(g) => {
                    let role = if out.partition.groups[*g].seeds.contains(&i) {
                        "seed"
                    } else {
                        "member"
                    };
                    (g.to_string(), role)
                }
                None => (String::new(), "none"),
            };
            w.write_record([i.to_string(), group, role.to_string()])?;
        }
        w.flush()?;
    }
    if dumps.coords {
        save_csv(&out.points, dir.join("contracted.csv"))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Best successful cell by ARI, then NMI, then fewer iterations.
    pub best: Option<RunRecord>,
    /// Every cell, successful rows sorted by descending ARI, errors last.
    pub table: Vec<ResultRow>,
    pub warnings: Vec<String>,
}

fn better(a: &RunRecord, b: &RunRecord) -> bool {
    let (ra, rb) = (&a.report, &b.report);
    ra.ari
        .total_cmp(&rb.ari)
        .then(ra.nmi.total_cmp(&rb.nmi))
        .then(
            b.config
                .contraction
                .iterations
                .cmp(&a.config.contraction.iterations),
        )
        .is_gt()
}

/// Runs every grid cell on `raw`, `workers` cells at a time. Nested parallel
/// work inside a cell shares the same pool, so at most `workers` threads run.
pub fn grid_search_points(
    raw: &PointSet,
    cfg: &PipelineConfig,
    load_seconds: f64,
) -> Result<GridOutcome, PipelineError> {
    cfg.validate()?;
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| PipelineError::invalid(Stage::Config, "grid search needs a grid"))?;
    let warnings = grid.range_warnings();
    for w in &warnings {
        tracing::warn!("{w}");
    }
    let cells = grid.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::invalid(Stage::Config, e.to_string()))?;
    let dataset = cfg.dataset_label();

    #[allow(clippy::result_large_err)]
    let results: Vec<Result<RunRecord, (ResultRow, PipelineError)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(k, lambda, iterations)| {
                let mut cell = cfg.clone();
                cell.grid = None;
                cell.out_dir = None;
                cell.contraction.k = k;
                cell.contraction.lambda = lambda;
                cell.contraction.iterations = iterations;
                let t = Instant::now();
                run_on_points(raw, &cell, load_seconds).map_err(|e| {
                    let row = ResultRow {
                        dataset: dataset.clone(),
                        variant: cell.contraction.variant,
                        k,
                        lambda,
                        iterations,
                        kmeans_k: cell.clusterer.k,
                        seed: cell.clusterer.seed,
                        nmi: None,
                        ari: None,
                        homogeneity: None,
                        acc: None,
                        seconds: t.elapsed().as_secs_f64(),
                        error: Some(e.to_string()),
                    };
                    (row, e)
                })
            })
            .collect()
    });

    let mut ok: Vec<RunRecord> = Vec::new();
    let mut failed: Vec<ResultRow> = Vec::new();
    for r in results {
        match r {
            Ok(rec) => ok.push(rec),
            Err((row, e)) => {
                tracing::warn!(
                    k = row.k,
                    lambda = row.lambda,
                    iterations = row.iterations,
                    "cell failed: {e}"
                );
                failed.push(row);
            }
        }
    }
    let mut best: Option<&RunRecord> = None;
    for rec in &ok {
        if best.is_none_or(|b| better(rec, b)) {
            best = Some(rec);
        }
    }
    let best = best.cloned();

    let mut table: Vec<ResultRow> = ok.iter().map(RunRecord::row).collect();
    table.sort_by(|a, b| {
        b.ari
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.ari.unwrap_or(f64::NEG_INFINITY))
            .then(b.nmi.unwrap_or(0.0).total_cmp(&a.nmi.unwrap_or(0.0)))
            .then(a.iterations.cmp(&b.iterations))
            .then(a.k.cmp(&b.k))
            .then(a.lambda.total_cmp(&b.lambda))
    });
    table.extend(failed);

    if let Some(dir) = &cfg.out_dir {
        let write = || -> Result<(), StageError> {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
            write_rows(&table, fs::File::create(dir.join("grid.csv"))?)?;
            if let Some(b) = &best {
                write_run_outputs(&dir.join("best"), b)?;
            }
            Ok(())
        };
        write().map_err(|e| PipelineError::new(Stage::Output, e))?;
    }
    Ok(GridOutcome {
        best,
        table,
        warnings,
    })
}

/// Load the configured CSV once and sweep its grid.
pub fn grid_search(cfg: &PipelineConfig) -> Result<GridOutcome, PipelineError> {
    cfg.validate()?;
    let (ps, secs) = load_points(cfg)?;
    grid_search_points(&ps, cfg, secs)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScalingError {
    #[error("scaling needs records at 2 or more distinct sizes, got {0}")]
    InsufficientData(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub timings: StageTimings,
}

/// Least-squares slope of `ln(seconds)` against `ln(n)` per stage.
/// A stage with any non-positive time has no slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub slopes: Vec<(String, Option<f64>)>,
    /// `t(n_last) / t(n_first)` of the contraction stage.
    pub contraction_ratio: f64,
}

impl ScalingReport {
    pub fn slope(&self, stage: &str) -> Option<f64> {
        self.slopes
            .iter()
            .find(|(s, _)| s == stage)
            .and_then(|(_, v)| *v)
    }
}

fn stage_entries(t: &StageTimings) -> [(&'static str, f64); 8] {
    [
        ("load", t.load),
        ("standardize", t.standardize),
        ("density", t.density),
        ("grouping", t.grouping),
        ("contraction", t.contraction),
        ("clustering", t.clustering),
        ("metrics", t.metrics),
        ("total", t.total()),
    ]
}

/// Fits `y = a + b x`; returns `b`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn runtime_report(rows: &[ScalingRow]) -> Result<ScalingReport, ScalingError> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(ScalingError::InsufficientData(sizes.len()));
    }
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| r.n);
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let names = stage_entries(&StageTimings::default()).map(|(s, _)| s);
    let slopes = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let ts: Vec<f64> = rows
                .iter()
                .map(|r| stage_entries(&r.timings)[i].1)
                .collect();
            let slope = ts.iter().all(|&t| t > 0.0).then(|| {
                let ys: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
                least_squares_slope(&xs, &ys)
            });
            (name.to_string(), slope)
        })
        .collect();
    let first = rows.first().expect("non-empty").timings.contraction;
    let last = rows.last().expect("non-empty").timings.contraction;
    Ok(ScalingReport {
        rows,
        slopes,
        contraction_ratio: last / first,
    })
}

pub fn runtime_report_from_records(records: &[RunRecord]) -> Result<ScalingReport, ScalingError> {
    let rows: Vec<ScalingRow> = records
        .iter()
        .map(|r| ScalingRow {
            n: r.n,
            timings: r.report.timings,
        })
        .collect();
    runtime_report(&rows)
}

/// Synthetic benchmark: a blob dataset per size, full pipeline on each.
pub fn run_benchmark(
    sizes: &[usize],
    dim: usize,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<RunRecord>, PipelineError> {
    sizes
        .iter()
        .map(|&n| {
            let t = Instant::now();
            let ps = make_blobs(&BlobSpec {
                n_points: n,
                dim,
                n_clusters: 4,
                spread: 1.0,
                separation: 6.0,
                seed,
            })
            .map_err(|e| PipelineError::new(Stage::Load, e))?;
            let mut cell = cfg.clone();
            cell.dataset_name = Some(format!("blobs-{n}x{dim}"));
            cell.out_dir = cfg.out_dir.as_ref().map(|d| d.join(format!("n{n}")));
            run_on_points(&ps, &cell, t.elapsed().as_secs_f64())
        })
        .collect()
}
