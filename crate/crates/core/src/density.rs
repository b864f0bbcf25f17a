//! Truncation radius, local densities and the low-density point set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::neighbor_index::{IndexError, NeighborIndex};

/// Fraction of the data used as the neighbor rank for the truncation radius.
pub const RADIUS_NEIGHBOR_FRACTION: f64 = 0.015;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DensityError {
    #[error("density estimation needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("empty density vector")]
    EmptyDensities,
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Density summary of a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    /// Truncation radius.
    pub r: f64,
    pub rho: Vec<usize>,
    /// Mean of `rho`; points strictly below it (and above zero) are low-density.
    pub rho_dagger: f64,
    /// Sorted ascending.
    pub low_density_ids: Vec<usize>,
    /// Neighbor rank used for the per-point radii.
    pub neighbor_rank: usize,
}

/// Where a point falls relative to the density threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityClass {
    Zero,
    Low,
    High,
}

impl DensityProfile {
    pub fn class_of(&self, id: usize) -> DensityClass {
        let rho = self.rho[id];
        if rho == 0 {
            DensityClass::Zero
        } else if (rho as f64) < self.rho_dagger {
            DensityClass::Low
        } else {
            DensityClass::High
        }
    }

    pub fn zero_density_ids(&self) -> Vec<usize> {
        (0..self.rho.len()).filter(|&i| self.rho[i] == 0).collect()
    }

    pub fn high_density_ids(&self) -> Vec<usize> {
        (0..self.rho.len())
            .filter(|&i| self.class_of(i) == DensityClass::High)
            .collect()
    }

    pub fn low_density_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rho.len()];
        for &i in &self.low_density_ids {
            mask[i] = true;
        }
        mask
    }
}

/// `max(1, ceil(1.5% of n))`.
pub fn neighbor_rank(n: usize) -> usize {
    ((RADIUS_NEIGHBOR_FRACTION * n as f64).ceil() as usize).max(1)
}

/// Mean over all points of the distance to each point's rank-`m` neighbor.
/// Returns `(r, m)`.
pub fn truncation_radius(ix: &NeighborIndex<'_>) -> Result<(f64, usize), DensityError> {
    let n = ix.len();
    if n < 2 {
        return Err(DensityError::TooFewPoints(n));
    }
    let m = neighbor_rank(n);
    let radii: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| ix.knn(i, m).map(|nn| nn[m - 1].dist))
        .collect::<Result<_, _>>()?;
    // Sequential sum keeps the result independent of thread count.
    Ok((radii.iter().sum::<f64>() / n as f64, m))
}

pub fn local_density(ix: &NeighborIndex<'_>, point_id: usize, r: f64) -> Result<usize, IndexError> {
    ix.count_within(point_id, r)
}

pub fn density_lower_bound(rho: &[usize]) -> Result<f64, DensityError> {
    if rho.is_empty() {
        return Err(DensityError::EmptyDensities);
    }
    Ok(rho.iter().map(|&v| v as f64).sum::<f64>() / rho.len() as f64)
}

/// Ids with `0 < rho < rho_dagger`, ascending.
pub fn low_density_set(rho: &[usize], rho_dagger: f64) -> Vec<usize> {
    rho.iter()
        .enumerate()
        .filter(|&(_, &v)| v > 0 && (v as f64) < rho_dagger)
        .map(|(i, _)| i)
        .collect()
}

/// Full density pass over the indexed snapshot.
pub fn density_profile(ix: &NeighborIndex<'_>) -> Result<DensityProfile, DensityError> {
    let (r, neighbor_rank) = truncation_radius(ix)?;
    let rho: Vec<usize> = (0..ix.len())
        .into_par_iter()
        .map(|i| local_density(ix, i, r))
        .collect::<Result<_, _>>()?;
    let rho_dagger = density_lower_bound(&rho)?;
    let low_density_ids = low_density_set(&rho, rho_dagger);
    Ok(DensityProfile {
        r,
        rho,
        rho_dagger,
        low_density_ids,
        neighbor_rank,
    })
}
