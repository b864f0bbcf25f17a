//! Group-driven gravitational contraction as a preprocessing step for
//! clustering, plus the evaluation harness used to measure its effect.
//!
//! The typical flow is [`dataset::load_csv`] → [`contraction::run_gcao`] →
//! [`pipeline::kmeans`] → [`evaluation::evaluate`], or all of it at once via
//! [`pipeline::run_pipeline`].

pub mod contraction;
pub mod dataset;
pub mod density;
pub mod evaluation;
pub mod grouping;
pub mod interop;
pub mod kmeans;
pub mod neighbor_index;
pub mod pipeline;

pub use contraction::{run_gcao, ContractionConfig, GcaoOutput, Variant};
pub use dataset::{LabelColumn, PointSet};
pub use evaluation::{evaluate, EvaluationReport, Metrics};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, RunRecord, Stage};
