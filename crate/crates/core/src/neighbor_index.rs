//! Exact Euclidean neighbor queries over a coordinate snapshot.
//!
//! The index is a kd-tree with per-node bounding boxes. All queries are
//! exact: results match a brute-force scan, and equal distances are ordered
//! by ascending point id. An index is only valid for the coordinates it was
//! built from; callers rebuild it after moving points.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::dataset::PointSet;

const LEAF_SIZE: usize = 16;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("k must satisfy 1 <= k <= n-1 (k={k}, n={n})")]
    InvalidK { k: usize, n: usize },
    #[error("point id {id} out of range for {n} points")]
    OutOfRange { id: usize, n: usize },
    #[error("nearest-neighbor distance needs at least 2 points")]
    Singleton,
}

/// One query hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub dist: f64,
}

impl Neighbor {
    #[inline]
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

// Max-heap entry: the worst current candidate sits on top.
#[derive(Clone, Copy)]
struct HeapEntry(Neighbor);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key_cmp(&other.0)
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf,
    Split { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    kind: NodeKind,
}

/// Immutable kd-tree over a [`PointSet`] snapshot.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'a> {
    points: &'a PointSet,
    /// Point ids in tree order.
    order: Vec<usize>,
    /// Coordinates permuted into tree order for locality.
    packed: Vec<f64>,
    nodes: Vec<Node>,
    /// Per node: `d` minima followed by `d` maxima.
    bounds: Vec<f64>,
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl<'a> NeighborIndex<'a> {
    /// Builds the tree. Deterministic for identical input.
    pub fn build(points: &'a PointSet) -> Self {
        let n = points.len();
        let d = points.dim();
        let mut ix = Self {
            points,
            order: (0..n).collect(),
            packed: Vec::new(),
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            bounds: Vec::new(),
        };
        ix.build_node(0, n);
        ix.packed = ix
            .order
            .iter()
            .flat_map(|&i| points.point(i).iter().copied())
            .collect();
        debug_assert_eq!(ix.bounds.len(), ix.nodes.len() * 2 * d);
        ix
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let d = self.points.dim();
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            kind: NodeKind::Leaf,
        });
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &p in &self.order[start..end] {
            for (j, &v) in self.points.point(p).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        self.bounds.extend_from_slice(&lo);
        self.bounds.extend_from_slice(&hi);

        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (0..d)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap_or(0);
        if hi[axis] - lo[axis] <= 0.0 {
            // All points coincide; a split would not separate anything.
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts.point(a)[axis]
                .total_cmp(&pts.point(b)[axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].kind = NodeKind::Split { left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &'a PointSet {
        self.points
    }

    #[inline]
    fn node_bounds(&self, node: usize) -> (&[f64], &[f64]) {
        let d = self.points.dim();
        let b = &self.bounds[node * 2 * d..(node + 1) * 2 * d];
        b.split_at(d)
    }

    /// Smallest distance from `q` to the node's box. Never exceeds the true
    /// distance to any point inside, also under rounding.
    #[inline]
    fn min_box_dist(&self, node: usize, q: &[f64]) -> f64 {
        let (lo, hi) = self.node_bounds(node);
        q.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&x, (&l, &h))| {
                let diff = if x < l {
                    l - x
                } else if x > h {
                    x - h
                } else {
                    0.0
                };
                diff * diff
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest distance from `q` to the node's box.
    #[inline]
    fn max_box_dist(&self, node: usize, q: &[f64]) -> f64 {
        let (lo, hi) = self.node_bounds(node);
        q.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&x, (&l, &h))| {
                let diff = (x - l).abs().max((h - x).abs());
                diff * diff
            })
            .sum::<f64>()
            .sqrt()
    }

    #[inline]
    fn packed_point(&self, slot: usize) -> &[f64] {
        let d = self.points.dim();
        &self.packed[slot * d..(slot + 1) * d]
    }

    fn check_id(&self, id: usize) -> Result<(), IndexError> {
        if id >= self.len() {
            return Err(IndexError::OutOfRange { id, n: self.len() });
        }
        Ok(())
    }

    /// The `k` nearest other points of `point_id`, sorted by ascending
    /// distance then id. A single-point index answers with an empty list.
    pub fn knn(&self, point_id: usize, k: usize) -> Result<Vec<Neighbor>, IndexError> {
        self.check_id(point_id)?;
        let n = self.len();
        if n == 1 {
            return Ok(Vec::new());
        }
        if k == 0 || k >= n {
            return Err(IndexError::InvalidK { k, n });
        }
        let q = self.points.point(point_id);
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, point_id, k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_iter().map(|e| e.0).collect();
        out.sort_by(Neighbor::key_cmp);
        Ok(out)
    }

    fn knn_rec(
        &self,
        node: usize,
        q: &[f64],
        skip: usize,
        k: usize,
        heap: &mut BinaryHeap<HeapEntry>,
    ) {
        if heap.len() == k {
            let worst = heap.peek().map_or(f64::INFINITY, |e| e.0.dist);
            if self.min_box_dist(node, q) > worst {
                return;
            }
        }
        match self.nodes[node].kind {
            NodeKind::Leaf => {
                let Node { start, end, .. } = self.nodes[node];
                for slot in start..end {
                    let id = self.order[slot];
                    if id == skip {
                        continue;
                    }
                    let cand = Neighbor {
                        id,
                        dist: dist(q, self.packed_point(slot)),
                    };
                    if heap.len() < k {
                        heap.push(HeapEntry(cand));
                    } else if let Some(top) = heap.peek() {
                        if cand.key_cmp(&top.0) == Ordering::Less {
                            heap.pop();
                            heap.push(HeapEntry(cand));
                        }
                    }
                }
            }
            NodeKind::Split { left, right } => {
                let (a, b) = if self.min_box_dist(left, q) <= self.min_box_dist(right, q) {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(a, q, skip, k, heap);
                self.knn_rec(b, q, skip, k, heap);
            }
        }
    }

    /// Number of other points within `radius` of `point_id`, boundary inclusive.
    pub fn count_within(&self, point_id: usize, radius: f64) -> Result<usize, IndexError> {
        self.check_id(point_id)?;
        let q = self.points.point(point_id);
        // The query point itself is always counted (distance 0) and removed here.
        Ok(self.count_rec(0, q, radius) - 1)
    }

    fn count_rec(&self, node: usize, q: &[f64], radius: f64) -> usize {
        if self.min_box_dist(node, q) > radius {
            return 0;
        }
        let Node {
            start,
            end,
            ref kind,
        } = self.nodes[node];
        if self.max_box_dist(node, q) <= radius {
            return end - start;
        }
        match *kind {
            NodeKind::Leaf => (start..end)
                .filter(|&slot| dist(q, self.packed_point(slot)) <= radius)
                .count(),
            NodeKind::Split { left, right } => {
                self.count_rec(left, q, radius) + self.count_rec(right, q, radius)
            }
        }
    }

    /// Distance from `point_id` to its nearest other point (0 for duplicates).
    pub fn nearest_distance(&self, point_id: usize) -> Result<f64, IndexError> {
        self.check_id(point_id)?;
        if self.len() < 2 {
            return Err(IndexError::Singleton);
        }
        Ok(self.knn(point_id, 1)?[0].dist)
    }

    /// k-NN lists for every point, computed in parallel.
    pub fn knn_all(&self, k: usize) -> Result<Vec<Vec<Neighbor>>, IndexError> {
        (0..self.len())
            .into_par_iter()
            .map(|i| self.knn(i, k))
            .collect()
    }
}
