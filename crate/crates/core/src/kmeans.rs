//! Lloyd's k-means with greedy k-means++ seeding and restarts.
//!
//! Each restart draws from its own ChaCha stream of the same seed, so results
//! depend only on the seed and not on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PointSet;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KMeansError {
    #[error("K={k} exceeds the number of points ({n})")]
    TooManyClusters { k: usize, n: usize },
    #[error("K must be >= 1")]
    ZeroClusters,
    #[error("restarts must be >= 1")]
    ZeroRestarts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 10,
            max_iter: 300,
            seed,
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// Row-major `k x d`.
    pub centers: Vec<f64>,
    /// Within-cluster sum of squared distances.
    pub wcss: f64,
    /// Lloyd iterations of the winning restart.
    pub iterations: usize,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_center(x: &[f64], centers: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.chunks_exact(d).enumerate() {
        let dist = sq_dist(x, center);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

/// Index of the first entry whose cumulative weight exceeds `target`.
fn sample_weighted(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc > target {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Greedy k-means++: each new center is the best of `2 + ln k` candidates
/// drawn proportional to squared distance from the current centers.
fn init_centers(ps: &PointSet, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, d) = (ps.len(), ps.dim());
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centers = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(ps.point(first));
    let mut closest: Vec<f64> = (0..n)
        .map(|i| sq_dist(ps.point(i), ps.point(first)))
        .collect();

    for _ in 1..k {
        let potential: f64 = closest.iter().sum();
        let candidates: Vec<usize> = if potential > 0.0 {
            (0..trials)
                .map(|_| sample_weighted(&closest, rng.random::<f64>() * potential))
                .collect()
        } else {
            // Every point coincides with a center already.
            vec![rng.random_range(0..n)]
        };
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for c in candidates {
            let x = ps.point(c);
            let updated: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| closest[i].min(sq_dist(ps.point(i), x)))
                .collect();
            let pot: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| pot < *p) {
                best = Some((pot, c, updated));
            }
        }
        let (_, c, updated) = best.expect("at least one candidate");
        centers.extend_from_slice(ps.point(c));
        closest = updated;
    }
    centers
}

fn lloyd(ps: &PointSet, mut centers: Vec<f64>, k: usize, max_iter: usize) -> KMeansResult {
    let (n, d) = (ps.len(), ps.dim());
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    loop {
        let assigned: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest_center(ps.point(i), &centers, d))
            .collect();
        let changed = assigned.iter().zip(&labels).any(|(&(c, _), &old)| c != old);
        for (l, &(c, _)) in labels.iter_mut().zip(&assigned) {
            *l = c;
        }
        if !changed || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(ps.point(i)) {
                *s += x;
            }
        }
        // Refill empty clusters with the points farthest from their centers.
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| assigned[b].1.total_cmp(&assigned[a].1).then(a.cmp(&b)));
            let mut donors = order.into_iter();
            for c in empty {
                let Some(i) = donors.by_ref().find(|&i| counts[labels[i]] > 1) else {
                    break;
                };
                let old = labels[i];
                counts[old] -= 1;
                for (s, x) in sums[old * d..(old + 1) * d].iter_mut().zip(ps.point(i)) {
                    *s -= x;
                }
                labels[i] = c;
                counts[c] = 1;
                sums[c * d..(c + 1) * d].copy_from_slice(ps.point(i));
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centers[c * d..(c + 1) * d]
                    .iter_mut()
                    .zip(&sums[c * d..(c + 1) * d])
                {
                    *dst = s * inv;
                }
            }
        }
    }
    let wcss = (0..n)
        .map(|i| sq_dist(ps.point(i), &centers[labels[i] * d..(labels[i] + 1) * d]))
        .sum();
    KMeansResult {
        labels,
        centers,
        wcss,
        iterations,
    }
}

/// Best of `cfg.restarts` seeded runs by WCSS; earlier restarts win ties.
pub fn kmeans_fit(ps: &PointSet, cfg: &KMeansConfig) -> Result<KMeansResult, KMeansError> {
    if cfg.k == 0 {
        return Err(KMeansError::ZeroClusters);
    }
    if cfg.k > ps.len() {
        return Err(KMeansError::TooManyClusters {
            k: cfg.k,
            n: ps.len(),
        });
    }
    if cfg.restarts == 0 {
        return Err(KMeansError::ZeroRestarts);
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let centers = init_centers(ps, cfg.k, &mut rng);
        let run = lloyd(ps, centers, cfg.k, cfg.max_iter);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Cluster labels from [`kmeans_fit`] with default iteration cap.
pub fn kmeans(
    ps: &PointSet,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<usize>, KMeansError> {
    kmeans_fit(ps, &KMeansConfig::new(k, seed).with_restarts(restarts)).map(|r| r.labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_blobs, BlobSpec};
    use crate::evaluation::evaluate;

    fn blobs4(seed: u64) -> PointSet {
        make_blobs(&BlobSpec {
            n_points: 400,
            dim: 2,
            n_clusters: 4,
            spread: 1.0,
            separation: 4.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let ps = PointSet::from_rows(
            &[vec![0.0], vec![1.0], vec![5.0], vec![9.0], vec![9.5]],
            None,
        )
        .unwrap();
        let r = kmeans_fit(&ps, &KMeansConfig::new(5, 1)).unwrap();
        assert_eq!(r.wcss, 0.0);
        let mut l = r.labels.clone();
        l.sort_unstable();
        l.dedup();
        assert_eq!(l.len(), 5);
    }

    #[test]
    fn two_far_pairs() {
        let ps = PointSet::from_rows(
            &[
                vec![0.0, 0.0],
                vec![0.1, 0.0],
                vec![100.0, 0.0],
                vec![100.1, 0.0],
            ],
            Some(vec![0, 0, 1, 1]),
        )
        .unwrap();
        let labels = kmeans(&ps, 2, 3, 7).unwrap();
        let m = evaluate(ps.labels().unwrap(), &labels).unwrap();
        assert_eq!(m.ari, 1.0);
    }

    #[test]
    fn too_many_clusters() {
        let ps = PointSet::from_rows(&[vec![0.0], vec![1.0]], None).unwrap();
        assert_eq!(
            kmeans(&ps, 3, 1, 0),
            Err(KMeansError::TooManyClusters { k: 3, n: 2 })
        );
        assert_eq!(kmeans(&ps, 0, 1, 0), Err(KMeansError::ZeroClusters));
    }

    #[test]
    fn deterministic_for_seed() {
        let ps = blobs4(3);
        let a = kmeans_fit(&ps, &KMeansConfig::new(4, 11)).unwrap();
        let b = kmeans_fit(&ps, &KMeansConfig::new(4, 11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wcss_close_to_many_restart_reference() {
        let ps = blobs4(4);
        let ten = kmeans_fit(&ps, &KMeansConfig::new(4, 5)).unwrap();
        let hundred = kmeans_fit(&ps, &KMeansConfig::new(4, 99).with_restarts(100)).unwrap();
        assert!(
            ten.wcss <= hundred.wcss * 1.01,
            "{} vs {}",
            ten.wcss,
            hundred.wcss
        );
    }

    #[test]
    fn wcss_matches_labels_and_centers() {
        let ps = blobs4(6);
        let r = kmeans_fit(&ps, &KMeansConfig::new(4, 2)).unwrap();
        let d = ps.dim();
        // Centers are the means of their clusters.
        for c in 0..4 {
            let members: Vec<usize> = (0..ps.len()).filter(|&i| r.labels[i] == c).collect();
            assert!(!members.is_empty());
            for j in 0..d {
                let mean =
                    members.iter().map(|&i| ps.point(i)[j]).sum::<f64>() / members.len() as f64;
                assert!((mean - r.centers[c * d + j]).abs() < 1e-9);
            }
        }
        let wcss: f64 = (0..ps.len())
            .map(|i| {
                sq_dist(
                    ps.point(i),
                    &r.centers[r.labels[i] * d..(r.labels[i] + 1) * d],
                )
            })
            .sum();
        assert!((wcss - r.wcss).abs() <= 1e-9 * wcss);
    }

    #[test]
    fn more_clusters_than_distinct_points_terminates() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i / 5) as f64]).collect();
        let ps = PointSet::from_rows(&rows, None).unwrap();
        let r = kmeans_fit(&ps, &KMeansConfig::new(3, 0)).unwrap();
        assert_eq!(r.wcss, 0.0);
        assert!(r.labels.iter().all(|&l| l < 3));
    }
}
