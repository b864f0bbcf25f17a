//! Gravitational contraction of groups.
//!
//! Each member of a group feels an attraction toward each of its k nearest
//! neighbors that lie outside the group. The pull toward neighbor `n` has
//! magnitude `lambda * d_near / d_n`, where `d_near` is the member's distance
//! to its own nearest neighbor, so no single pull exceeds `lambda`. The group
//! moves rigidly by the mean of its members' forces. Neighbor lists are
//! recomputed on the moved coordinates every iteration; the partition is not.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PointSet;
use crate::density::{density_profile, DensityError, DensityProfile};
use crate::grouping::{form_groups, form_groups_with_seeds, Group, GroupPartition};
use crate::neighbor_index::{IndexError, NeighborIndex};

/// Which parts of the method are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Density-selected groups with distance-weighted pulls.
    #[default]
    Full,
    /// No groups: every low-density point moves alone.
    S,
    /// No density selection: every point with positive density seeds a group.
    D,
    /// Uniform pull magnitude `lambda` regardless of distance.
    G,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::S, Variant::D, Variant::G];

    fn uniform_weights(self) -> bool {
        self == Variant::G
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::S => "s",
            Variant::D => "d",
            Variant::G => "g",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "s" => Ok(Variant::S),
            "d" => Ok(Variant::D),
            "g" => Ok(Variant::G),
            other => Err(format!("unknown variant {other:?} (expected full|s|d|g)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionConfig {
    /// Neighbor count for grouping and forces.
    pub k: usize,
    /// Step coefficient.
    pub lambda: f64,
    /// Number of contraction iterations.
    pub iterations: usize,
    #[serde(default)]
    pub variant: Variant,
    /// Stop early once the largest group displacement falls below this.
    #[serde(default)]
    pub epsilon_stop: Option<f64>,
    /// Keep a coordinate copy after every iteration in the trace.
    #[serde(default)]
    pub record_snapshots: bool,
}

impl ContractionConfig {
    pub fn new(k: usize, lambda: f64, iterations: usize) -> Self {
        Self {
            k,
            lambda,
            iterations,
            variant: Variant::Full,
            epsilon_stop: None,
            record_snapshots: false,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<(), ContractionError> {
        if self.k == 0 {
            return Err(ContractionError::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ContractionError::InvalidConfig(format!(
                "lambda must be a positive finite number, got {}",
                self.lambda
            )));
        }
        if self.iterations == 0 {
            return Err(ContractionError::InvalidConfig(
                "iterations must be >= 1".into(),
            ));
        }
        if let Some(eps) = self.epsilon_stop {
            if eps.is_nan() || eps < 0.0 {
                return Err(ContractionError::InvalidConfig(format!(
                    "epsilon_stop must be non-negative, got {eps}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ContractionError {
    #[error("invalid contraction config: {0}")]
    InvalidConfig(String),
    #[error("contraction needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("k={k} must be smaller than the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Displacement statistics of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub iteration: usize,
    /// Largest group displacement magnitude.
    pub max_disp: f64,
    /// Mean group displacement magnitude.
    pub mean_disp: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractionTrace {
    pub steps: Vec<StepStats>,
    /// Set when the run did nothing, e.g. no low-density points.
    pub warning: Option<String>,
    /// Coordinates after each iteration, when requested.
    #[serde(skip)]
    pub snapshots: Vec<Vec<f64>>,
}

impl ContractionTrace {
    /// `iteration,max_disp,mean_disp` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,max_disp,mean_disp")?;
        for s in &self.steps {
            writeln!(w, "{},{:?},{:?}", s.iteration, s.max_disp, s.mean_disp)?;
        }
        Ok(())
    }
}

/// Attraction of `x_m` toward `x_n`: `lambda * d_near / d_mn` along the unit
/// vector from `x_m` to `x_n`. Coincident points contribute nothing.
pub fn response_vector(x_m: &[f64], x_n: &[f64], d_near: f64, lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; x_m.len()];
    add_response(&mut out, x_m, x_n, d_near, lambda, false);
    out
}

#[inline]
fn add_response(
    acc: &mut [f64],
    x_m: &[f64],
    x_n: &[f64],
    d_near: f64,
    lambda: f64,
    uniform: bool,
) {
    let d_mn = x_m
        .iter()
        .zip(x_n)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if d_mn == 0.0 {
        return;
    }
    let magnitude = if uniform {
        lambda
    } else {
        lambda * (d_near / d_mn)
    };
    let scale = magnitude / d_mn;
    for ((a, m), n) in acc.iter_mut().zip(x_m).zip(x_n) {
        *a += scale * (n - m);
    }
}

/// Force on `point_id` from its k nearest neighbors outside `group_id`,
/// evaluated on the coordinates `ix` was built from.
pub fn member_force(
    point_id: usize,
    group_id: usize,
    assignment: &[Option<usize>],
    ix: &NeighborIndex<'_>,
    k: usize,
    lambda: f64,
    variant: Variant,
) -> Result<Vec<f64>, IndexError> {
    let ps = ix.points();
    let neighbors = ix.knn(point_id, k)?;
    let mut force = vec![0.0; ps.dim()];
    let Some(nearest) = neighbors.first() else {
        return Ok(force);
    };
    let d_near = nearest.dist;
    let x_m = ps.point(point_id);
    for nb in neighbors
        .iter()
        .filter(|nb| assignment[nb.id] != Some(group_id))
    {
        add_response(
            &mut force,
            x_m,
            ps.point(nb.id),
            d_near,
            lambda,
            variant.uniform_weights(),
        );
    }
    Ok(force)
}

/// Mean of the member forces of `group`, `forces` indexed by point id.
pub fn group_force(group: &Group, forces: &[Vec<f64>]) -> Vec<f64> {
    let dim = forces.iter().find(|f| !f.is_empty()).map_or(0, Vec::len);
    let mut sum = vec![0.0; dim];
    for p in group.all() {
        for (s, f) in sum.iter_mut().zip(&forces[p]) {
            *s += f;
        }
    }
    let size = group.size() as f64;
    sum.iter_mut().for_each(|s| *s /= size);
    sum
}

/// One iteration: rebuild the index on `ps`, compute every group's
/// displacement from the same snapshot, then translate all groups at once.
/// Ungrouped points are left untouched.
pub fn contraction_step(
    ps: &PointSet,
    partition: &GroupPartition,
    cfg: &ContractionConfig,
    iteration: usize,
) -> Result<(PointSet, StepStats), IndexError> {
    let ix = NeighborIndex::build(ps);
    let deltas = group_displacements(&ix, partition, cfg)?;
    let mut next = ps.clone();
    {
        let d = ps.dim();
        let coords = next.coords_mut();
        for (g, delta) in partition.groups.iter().zip(&deltas) {
            for p in g.all() {
                for (c, dx) in coords[p * d..(p + 1) * d].iter_mut().zip(delta) {
                    *c += dx;
                }
            }
        }
    }
    let norms: Vec<f64> = deltas
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let max_disp = norms.iter().copied().fold(0.0, f64::max);
    let mean_disp = if norms.is_empty() {
        0.0
    } else {
        norms.iter().sum::<f64>() / norms.len() as f64
    };
    Ok((
        next,
        StepStats {
            iteration,
            max_disp,
            mean_disp,
        },
    ))
}

/// Displacement vector of every group, in group order.
pub fn group_displacements(
    ix: &NeighborIndex<'_>,
    partition: &GroupPartition,
    cfg: &ContractionConfig,
) -> Result<Vec<Vec<f64>>, IndexError> {
    let n = ix.len();
    // Member forces are independent per point; group means are reduced
    // afterwards in a fixed order so results do not depend on scheduling.
    let forces: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|p| match partition.assignment[p] {
            Some(g) => member_force(
                p,
                g,
                &partition.assignment,
                ix,
                cfg.k,
                cfg.lambda,
                cfg.variant,
            ),
            None => Ok(Vec::new()),
        })
        .collect::<Result<_, _>>()?;
    Ok(partition
        .groups
        .iter()
        .map(|g| group_force(g, &forces))
        .collect())
}

/// Wall-clock seconds spent in each stage of [`run_gcao`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GcaoTimings {
    pub density: f64,
    pub grouping: f64,
    pub contraction: f64,
}

#[derive(Debug, Clone)]
pub struct GcaoOutput {
    pub points: PointSet,
    pub profile: DensityProfile,
    pub partition: GroupPartition,
    pub trace: ContractionTrace,
    pub timings: GcaoTimings,
}

/// Builds the partition the chosen variant moves.
pub fn partition_for_variant(
    ix: &NeighborIndex<'_>,
    profile: &DensityProfile,
    k: usize,
    variant: Variant,
) -> Result<GroupPartition, IndexError> {
    match variant {
        Variant::Full | Variant::G => form_groups(ix, profile, k),
        Variant::S => Ok(GroupPartition::singletons(
            &profile.low_density_ids,
            ix.len(),
        )),
        Variant::D => {
            let positive: Vec<usize> = (0..ix.len()).filter(|&i| profile.rho[i] > 0).collect();
            form_groups_with_seeds(ix, profile, k, &positive)
        }
    }
}

/// Density estimation and grouping once, then `cfg.iterations` contraction
/// steps on the moving coordinates.
pub fn run_gcao(ps: &PointSet, cfg: &ContractionConfig) -> Result<GcaoOutput, ContractionError> {
    cfg.validate()?;
    let n = ps.len();
    if n < 2 {
        return Err(ContractionError::TooFewPoints(n));
    }
    if cfg.k >= n {
        return Err(ContractionError::KTooLarge { k: cfg.k, n });
    }

    let mut timings = GcaoTimings::default();
    let t0 = Instant::now();
    let ix = NeighborIndex::build(ps);
    let profile = density_profile(&ix)?;
    timings.density = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let partition = partition_for_variant(&ix, &profile, cfg.k, cfg.variant)?;
    timings.grouping = t1.elapsed().as_secs_f64();

    let mut trace = ContractionTrace::default();
    if partition.is_empty() {
        tracing::warn!("no low-density points; contraction is a no-op");
        trace.warning = Some("no low-density points; nothing to contract".into());
        return Ok(GcaoOutput {
            points: ps.clone(),
            profile,
            partition,
            trace,
            timings,
        });
    }

    let t2 = Instant::now();
    let mut current = ps.clone();
    for it in 1..=cfg.iterations {
        let (next, stats) = contraction_step(&current, &partition, cfg, it)?;
        current = next;
        trace.steps.push(stats);
        if cfg.record_snapshots {
            trace.snapshots.push(current.coords().to_vec());
        }
        if cfg.epsilon_stop.is_some_and(|eps| stats.max_disp < eps) {
            tracing::debug!(iteration = it, "displacement below epsilon, stopping");
            break;
        }
    }
    timings.contraction = t2.elapsed().as_secs_f64();

    Ok(GcaoOutput {
        points: current,
        profile,
        partition,
        trace,
        timings,
    })
}
