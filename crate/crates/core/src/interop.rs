//! Flat entry points for foreign-language wrappers.
//!
//! Data crosses as a contiguous row-major `f64` buffer plus its shape. These
//! functions add no numerical logic of their own; they run exactly what the
//! CLI runs, so results match it bit for bit.

use crate::contraction::{run_gcao, ContractionConfig};
use crate::dataset::{standardize, PointSet};
use crate::evaluation::{evaluate, Metrics};
use crate::pipeline::{PipelineError, Stage};

/// Version of the core library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Contracts an `n x d` row-major matrix and returns the moved coordinates in
/// the same layout. With `standardize_first`, columns are z-scored before
/// contraction, as the CLI does by default.
pub fn fit_transform(
    data: &[f64],
    n: usize,
    d: usize,
    cfg: &ContractionConfig,
    standardize_first: bool,
) -> Result<Vec<f64>, PipelineError> {
    let ps =
        PointSet::new(data.to_vec(), n, d, None).map_err(|e| PipelineError::new(Stage::Load, e))?;
    let ps = if standardize_first {
        standardize(&ps).map_err(|e| PipelineError::new(Stage::Standardize, e))?
    } else {
        ps
    };
    let out = run_gcao(&ps, cfg).map_err(|e| PipelineError::new(Stage::Contraction, e))?;
    Ok(out.points.into_coords())
}

/// The four external metrics of `pred` against `truth`.
pub fn evaluate_labels(truth: &[usize], pred: &[usize]) -> Result<Metrics, PipelineError> {
    evaluate(truth, pred).map_err(|e| PipelineError::new(Stage::Metrics, e))
}
