//! Collaboratively moving groups.
//!
//! Low-density points are linked through their k-NN relations; each connected
//! component becomes the seed set of one group. Non-seed points with positive
//! density found in the seeds' k-NN lists are attached as members. A point
//! claimed by several groups goes to the group holding most of its own k-NN
//! among its seeds. The partition is built once and never revised.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityProfile;
use crate::neighbor_index::{IndexError, Neighbor, NeighborIndex};

/// k-NN lists for every point of one snapshot.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    k: usize,
    lists: Vec<Vec<Neighbor>>,
}

impl KnnGraph {
    pub fn build(ix: &NeighborIndex<'_>, k: usize) -> Result<Self, IndexError> {
        Ok(Self {
            k,
            lists: ix.knn_all(k)?,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, id: usize) -> &[Neighbor] {
        &self.lists[id]
    }

    /// Whether `id` is among the k nearest neighbors of `of`.
    pub fn contains(&self, of: usize, id: usize) -> bool {
        self.lists[of].iter().any(|n| n.id == id)
    }
}

/// Undirected graph over the low-density points. Vertex `v` is point
/// `ids[v]`; `neighbors[v]` holds vertex indices, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowDensityAdjacency {
    pub ids: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
}

impl LowDensityAdjacency {
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as point-id pairs `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (v, adj) in self.neighbors.iter().enumerate() {
            for &w in adj {
                let (a, b) = (self.ids[v], self.ids[w]);
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// One moving unit: low-density seeds plus attached members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub group_id: usize,
    /// Ascending.
    pub seeds: Vec<usize>,
    /// Ascending, disjoint from `seeds`.
    pub members: Vec<usize>,
}

impl Group {
    /// Seeds followed by members.
    pub fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.seeds.iter().chain(&self.members).copied()
    }

    pub fn size(&self) -> usize {
        self.seeds.len() + self.members.len()
    }
}

/// Disjoint groups plus the point -> group map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub groups: Vec<Group>,
    /// `assignment[i]` is the group of point `i`, `None` when ungrouped.
    pub assignment: Vec<Option<usize>>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("point {0} belongs to more than one group")]
    Overlap(usize),
    #[error("low-density point {0} is not a seed of any group")]
    UncoveredSeed(usize),
    #[error("zero-density point {0} is grouped")]
    ZeroDensityMember(usize),
    #[error("group {0} has no seeds")]
    EmptyGroup(usize),
    #[error("assignment of point {0} disagrees with group contents")]
    AssignmentMismatch(usize),
}

impl GroupPartition {
    fn from_groups(groups: Vec<Group>, n: usize) -> Self {
        let mut assignment = vec![None; n];
        for g in &groups {
            for p in g.all() {
                assignment[p] = Some(g.group_id);
            }
        }
        Self { groups, assignment }
    }

    /// Every listed point as its own seed-only group.
    pub fn singletons(ids: &[usize], n: usize) -> Self {
        let groups = ids
            .iter()
            .enumerate()
            .map(|(g, &p)| Group {
                group_id: g,
                seeds: vec![p],
                members: Vec::new(),
            })
            .collect();
        Self::from_groups(groups, n)
    }

    pub fn empty(n: usize) -> Self {
        Self::from_groups(Vec::new(), n)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn grouped_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }

    pub fn ungrouped(&self) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i].is_none())
            .collect()
    }

    /// Checks disjointness, seed coverage, the zero-density exclusion and the
    /// consistency of `assignment`.
    pub fn validate(&self, seeds: &[usize], rho: &[usize]) -> Result<(), PartitionError> {
        let mut owner = vec![None; self.assignment.len()];
        for g in &self.groups {
            if g.seeds.is_empty() {
                return Err(PartitionError::EmptyGroup(g.group_id));
            }
            for p in g.all() {
                if owner[p].replace(g.group_id).is_some() {
                    return Err(PartitionError::Overlap(p));
                }
                if rho[p] == 0 {
                    return Err(PartitionError::ZeroDensityMember(p));
                }
            }
        }
        for (p, (a, o)) in self.assignment.iter().zip(&owner).enumerate() {
            if a != o {
                return Err(PartitionError::AssignmentMismatch(p));
            }
        }
        let mut is_seed = vec![false; self.assignment.len()];
        for g in &self.groups {
            for &s in &g.seeds {
                is_seed[s] = true;
            }
        }
        if let Some(&p) = seeds.iter().find(|&&p| !is_seed[p]) {
            return Err(PartitionError::UncoveredSeed(p));
        }
        Ok(())
    }
}

/// Symmetrized k-NN graph restricted to `low`: `i ~ j` iff `j` is among the
/// k nearest neighbors of `i` or vice versa. `low` must be ascending.
pub fn build_low_density_adjacency(low: &[usize], knn: &KnnGraph) -> LowDensityAdjacency {
    let n = knn.len();
    let mut local = vec![usize::MAX; n];
    for (v, &p) in low.iter().enumerate() {
        local[p] = v;
    }
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); low.len()];
    for (v, &p) in low.iter().enumerate() {
        for nb in knn.neighbors(p) {
            let w = local[nb.id];
            if w != usize::MAX {
                neighbors[v].push(w);
                neighbors[w].push(v);
            }
        }
    }
    for adj in &mut neighbors {
        adj.sort_unstable();
        adj.dedup();
    }
    LowDensityAdjacency {
        ids: low.to_vec(),
        neighbors,
    }
}

/// Connected components by iterative depth-first search. Each component is
/// returned as ascending point ids; components are ordered by smallest id.
pub fn connected_groups(adj: &LowDensityAdjacency) -> Vec<Vec<usize>> {
    let n = adj.ids.len();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    // Walking vertices in ascending id order yields components sorted by
    // their smallest id.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| adj.ids[v]);
    for start in order {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(v) = stack.pop() {
            comp.push(adj.ids[v]);
            for &w in &adj.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Attaches member points to seed groups and resolves shared claims.
///
/// Candidates of group `j` are non-seed points with positive density found in
/// the k-NN list of one of its seeds. A candidate claimed by one group joins
/// it. Otherwise it joins the claiming group with the most seeds in the
/// candidate's own k-NN list; ties go to the group with the seed nearest to
/// the candidate, then to the smaller group id.
pub fn attach_members(
    seed_groups: &[Vec<usize>],
    knn: &KnnGraph,
    ix: &NeighborIndex<'_>,
    profile: &DensityProfile,
) -> GroupPartition {
    let n = knn.len();
    let mut seed_owner: Vec<Option<usize>> = vec![None; n];
    for (g, seeds) in seed_groups.iter().enumerate() {
        for &s in seeds {
            seed_owner[s] = Some(g);
        }
    }

    // Claims are pushed in group order, so each list is ascending.
    let mut claims: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (g, seeds) in seed_groups.iter().enumerate() {
        for &s in seeds {
            for nb in knn.neighbors(s) {
                let y = nb.id;
                if seed_owner[y].is_none() && profile.rho[y] > 0 && claims[y].last() != Some(&g) {
                    claims[y].push(g);
                }
            }
        }
    }

    let points = ix.points();
    let winners: Vec<Option<usize>> = claims
        .par_iter()
        .enumerate()
        .map(|(y, groups)| match groups.as_slice() {
            [] => None,
            [only] => Some(*only),
            contested => Some(resolve_shared(
                y,
                contested,
                knn,
                &seed_owner,
                seed_groups,
                points,
            )),
        })
        .collect();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); seed_groups.len()];
    for (y, w) in winners.into_iter().enumerate() {
        if let Some(g) = w {
            members[g].push(y);
        }
    }
    let groups = seed_groups
        .iter()
        .zip(members)
        .enumerate()
        .map(|(g, (seeds, members))| Group {
            group_id: g,
            seeds: seeds.clone(),
            members,
        })
        .collect();
    GroupPartition::from_groups(groups, n)
}

fn resolve_shared(
    y: usize,
    contested: &[usize],
    knn: &KnnGraph,
    seed_owner: &[Option<usize>],
    seed_groups: &[Vec<usize>],
    points: &crate::dataset::PointSet,
) -> usize {
    let votes: Vec<usize> = contested
        .iter()
        .map(|&g| {
            knn.neighbors(y)
                .iter()
                .filter(|nb| seed_owner[nb.id] == Some(g))
                .count()
        })
        .collect();
    let best = votes.iter().copied().max().unwrap_or(0);
    let tied: Vec<usize> = contested
        .iter()
        .zip(&votes)
        .filter(|&(_, &v)| v == best)
        .map(|(&g, _)| g)
        .collect();
    if let [g] = tied.as_slice() {
        return *g;
    }
    let py = points.point(y);
    // min_by keeps the first of equal keys, i.e. the smallest group id.
    tied.into_iter()
        .map(|g| {
            let nearest = seed_groups[g]
                .iter()
                .map(|&s| sq_dist(py, points.point(s)))
                .fold(f64::INFINITY, f64::min);
            (g, nearest)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(g, _)| g)
        .expect("contested point has at least two claimants")
}

/// Full group formation with an explicit seed set (ascending).
pub fn form_groups_with_seeds(
    ix: &NeighborIndex<'_>,
    profile: &DensityProfile,
    k: usize,
    seeds: &[usize],
) -> Result<GroupPartition, IndexError> {
    if seeds.is_empty() {
        return Ok(GroupPartition::empty(ix.len()));
    }
    let knn = KnnGraph::build(ix, k)?;
    let adj = build_low_density_adjacency(seeds, &knn);
    let components = connected_groups(&adj);
    Ok(attach_members(&components, &knn, ix, profile))
}

/// Group formation seeded by the profile's low-density set.
pub fn form_groups(
    ix: &NeighborIndex<'_>,
    profile: &DensityProfile,
    k: usize,
) -> Result<GroupPartition, IndexError> {
    form_groups_with_seeds(ix, profile, k, &profile.low_density_ids)
}
