//! Straight-from-definition reference implementations used by integration
//! and acceptance tests. Everything here is quadratic and shares no code with
//! the library beyond the `PointSet` container.

#![allow(dead_code)]

use gcao::dataset::{make_blobs, make_uniform, BlobSpec, PointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// k nearest other points by (distance, id).
pub fn knn(ps: &PointSet, i: usize, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..ps.len())
        .filter(|&j| j != i)
        .map(|j| (j, dist(ps.point(i), ps.point(j))))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn rank(n: usize) -> usize {
    ((0.015 * n as f64).ceil() as usize).max(1)
}

pub struct OracleDensity {
    pub r: f64,
    pub rho: Vec<usize>,
    pub rho_dagger: f64,
    pub low: Vec<usize>,
}

pub fn density(ps: &PointSet) -> OracleDensity {
    let n = ps.len();
    let m = rank(n);
    let r = (0..n).map(|i| knn(ps, i, m)[m - 1].1).sum::<f64>() / n as f64;
    let rho: Vec<usize> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && dist(ps.point(i), ps.point(j)) <= r)
                .count()
        })
        .collect();
    let rho_dagger = rho.iter().sum::<usize>() as f64 / n as f64;
    let low = (0..n)
        .filter(|&i| rho[i] > 0 && (rho[i] as f64) < rho_dagger)
        .collect();
    OracleDensity {
        r,
        rho,
        rho_dagger,
        low,
    }
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = x;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Point-to-group map plus the seeds of each group. Seed components come from
/// union-find over the symmetrized k-NN relation restricted to `seeds`, and
/// are numbered by their smallest id.
pub fn groups(
    ps: &PointSet,
    rho: &[usize],
    seeds: &[usize],
    k: usize,
) -> (Vec<Option<usize>>, Vec<Vec<usize>>) {
    let n = ps.len();
    let lists: Vec<Vec<usize>> = (0..n)
        .map(|i| knn(ps, i, k).into_iter().map(|(j, _)| j).collect())
        .collect();
    let is_seed: Vec<bool> = (0..n).map(|i| seeds.contains(&i)).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for &a in seeds {
        for &b in &lists[a] {
            if is_seed[b] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut roots: Vec<usize> = seeds.iter().map(|&s| find(&mut parent, s)).collect();
    roots.sort_unstable();
    roots.dedup();
    let mut group_seeds: Vec<Vec<usize>> = vec![Vec::new(); roots.len()];
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    for &s in seeds {
        let g = roots.binary_search(&find(&mut parent, s)).unwrap();
        group_seeds[g].push(s);
        assignment[s] = Some(g);
    }
    for y in 0..n {
        if is_seed[y] || rho[y] == 0 {
            continue;
        }
        let claimants: Vec<usize> = (0..group_seeds.len())
            .filter(|&g| group_seeds[g].iter().any(|&s| lists[s].contains(&y)))
            .collect();
        if claimants.is_empty() {
            continue;
        }
        let score = |g: usize| {
            lists[y]
                .iter()
                .filter(|&&z| group_seeds[g].contains(&z))
                .count()
        };
        let nearest = |g: usize| {
            group_seeds[g]
                .iter()
                .map(|&s| sq_dist(ps.point(y), ps.point(s)))
                .fold(f64::INFINITY, f64::min)
        };
        let mut best = claimants[0];
        for &g in &claimants[1..] {
            let (sg, sb) = (score(g), score(best));
            if sg > sb || (sg == sb && nearest(g) < nearest(best)) {
                best = g;
            }
        }
        assignment[y] = Some(best);
    }
    (assignment, group_seeds)
}

/// Force on grouped point `p` from its k nearest points outside its group.
pub fn member_force(
    ps: &PointSet,
    p: usize,
    assignment: &[Option<usize>],
    k: usize,
    lambda: f64,
    uniform: bool,
) -> Vec<f64> {
    let nbrs = knn(ps, p, k);
    let d_near = nbrs[0].1;
    let xp = ps.point(p);
    let mut f = vec![0.0; ps.dim()];
    for &(q, d) in &nbrs {
        if assignment[q] == assignment[p] || d == 0.0 {
            continue;
        }
        let mag = if uniform { lambda } else { lambda * d_near / d };
        for (fi, (a, b)) in f.iter_mut().zip(xp.iter().zip(ps.point(q))) {
            *fi += mag * (b - a) / d;
        }
    }
    f
}

/// One translation of every group by the mean force of its points.
pub fn step(
    ps: &PointSet,
    assignment: &[Option<usize>],
    n_groups: usize,
    k: usize,
    lambda: f64,
    uniform: bool,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = ps.dim();
    let mut sums = vec![vec![0.0; d]; n_groups];
    let mut sizes = vec![0usize; n_groups];
    for p in 0..ps.len() {
        if let Some(g) = assignment[p] {
            let f = member_force(ps, p, assignment, k, lambda, uniform);
            for (s, v) in sums[g].iter_mut().zip(&f) {
                *s += v;
            }
            sizes[g] += 1;
        }
    }
    let deltas: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&sizes)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    let mut coords = ps.coords().to_vec();
    for p in 0..ps.len() {
        if let Some(g) = assignment[p] {
            for j in 0..d {
                coords[p * d + j] += deltas[g][j];
            }
        }
    }
    (coords, deltas)
}

/// `|a - b| <= tol * max(|a|, |b|, floor)`.
pub fn close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}

/// The random instance family: blobs or uniform, N <= 200, d <= 8.
pub fn random_instance(case: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + case);
    let n = rng.random_range(20..=200);
    let d = rng.random_range(1..=8);
    if rng.random_bool(0.5) {
        make_blobs(&BlobSpec {
            n_points: n,
            dim: d,
            n_clusters: rng.random_range(2..=5),
            spread: 1.0,
            separation: rng.random_range(2.0..8.0),
            seed: case,
        })
        .unwrap()
    } else {
        make_uniform(n, d, case).unwrap()
    }
}

/// Exact pair-count ARI as a reduced fraction of integers, then one division.
pub fn ari_by_pairs(truth: &[usize], pred: &[usize]) -> f64 {
    let n = truth.len();
    let (mut tp, mut tn, mut fp, mut fneg) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..n {
        for j in i + 1..n {
            match (truth[i] == truth[j], pred[i] == pred[j]) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
            }
        }
    }
    let c = tp + tn + fp + fneg;
    let a = tp + fneg; // same class
    let b = tp + fp; // same cluster
                     // RI = (tp+tn)/c, E[RI] = (ab + (c-a)(c-b))/c^2, max RI = 1.
    let num = (tp + tn) * c - (a * b + (c - a) * (c - b));
    let den = c * c - (a * b + (c - a) * (c - b));
    if den == 0 {
        return 0.0;
    }
    let g = gcd(num.abs(), den.abs());
    (num / g) as f64 / (den / g) as f64
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Best matching by trying every permutation of the padded table.
pub fn acc_by_permutations(truth: &[usize], pred: &[usize]) -> f64 {
    let r = truth.iter().max().map_or(0, |m| m + 1);
    let c = pred.iter().max().map_or(0, |m| m + 1);
    let s = r.max(c);
    let mut tab = vec![vec![0usize; s]; s];
    for (&t, &p) in truth.iter().zip(pred) {
        tab[t][p] += 1;
    }
    let mut perm: Vec<usize> = (0..s).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        best = best.max((0..s).map(|i| tab[i][p[i]]).sum::<usize>());
    });
    best as f64 / truth.len() as f64
}

fn permute(v: &mut Vec<usize>, at: usize, f: &mut dyn FnMut(&[usize])) {
    if at == v.len() {
        f(v);
        return;
    }
    for i in at..v.len() {
        v.swap(at, i);
        permute(v, at + 1, f);
        v.swap(at, i);
    }
}

/// Joint and marginal probabilities, each formed as count / n.
fn probabilities(truth: &[usize], pred: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = truth.len() as f64;
    let r = truth.iter().max().unwrap() + 1;
    let c = pred.iter().max().unwrap() + 1;
    let mut counts = vec![vec![0usize; c]; r];
    for (&t, &p) in truth.iter().zip(pred) {
        counts[t][p] += 1;
    }
    let pu = counts
        .iter()
        .map(|row| row.iter().sum::<usize>() as f64 / n)
        .collect();
    let pv = (0..c)
        .map(|j| counts.iter().map(|row| row[j]).sum::<usize>() as f64 / n)
        .collect();
    let joint = counts
        .iter()
        .map(|row| row.iter().map(|&x| x as f64 / n).collect())
        .collect();
    (joint, pu, pv)
}

/// NMI from probability sums over the joint distribution, natural logs.
pub fn nmi_direct(truth: &[usize], pred: &[usize]) -> f64 {
    let (joint, pu, pv) = probabilities(truth, pred);
    let (r, c) = (pu.len(), pv.len());
    let h = |ps: &[f64]| {
        -ps.iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    };
    let (hu, hv) = (h(&pu), h(&pv));
    if hu == 0.0 || hv == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for i in 0..r {
        for j in 0..c {
            if joint[i][j] > 0.0 {
                mi += joint[i][j] * (joint[i][j] / (pu[i] * pv[j])).ln();
            }
        }
    }
    mi / (hu * hv).sqrt()
}

/// 1 - H(truth | pred) / H(truth) from probability sums.
pub fn homogeneity_direct(truth: &[usize], pred: &[usize]) -> f64 {
    let (joint, pu, pv) = probabilities(truth, pred);
    let hu = -pu
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    if hu == 0.0 {
        return 1.0;
    }
    let mut hcond = 0.0;
    for row in &joint {
        for (&pij, &pj) in row.iter().zip(&pv) {
            if pij > 0.0 {
                hcond -= pij * (pij / pj).ln();
            }
        }
    }
    1.0 - hcond / hu
}

/// Checks every intermediate quantity of one contraction step against the
/// reference above. Returns the first mismatch.
pub fn compare_with_oracle(ps: &PointSet, k: usize, lambda: f64, tol: f64) -> Result<(), String> {
    use gcao::contraction::{
        contraction_step, member_force as lib_force, ContractionConfig, Variant,
    };
    use gcao::density::density_profile;
    use gcao::grouping::form_groups;
    use gcao::neighbor_index::NeighborIndex;

    let n = ps.len();
    let ix = NeighborIndex::build(ps);
    for i in 0..n {
        let got = ix.knn(i, k).map_err(|e| e.to_string())?;
        let want = knn(ps, i, k);
        if got.len() != want.len() {
            return Err(format!("knn({i}) length {} vs {}", got.len(), want.len()));
        }
        for (g, w) in got.iter().zip(&want) {
            if g.id != w.0 || !close(g.dist, w.1, tol, 0.0) {
                return Err(format!(
                    "knn({i}): ({}, {}) vs ({}, {})",
                    g.id, g.dist, w.0, w.1
                ));
            }
        }
    }

    let prof = density_profile(&ix).map_err(|e| e.to_string())?;
    let want = density(ps);
    if !close(prof.r, want.r, tol, 0.0) {
        return Err(format!("r {} vs {}", prof.r, want.r));
    }
    if prof.rho != want.rho {
        return Err("rho differs".into());
    }
    if !close(prof.rho_dagger, want.rho_dagger, tol, 0.0) {
        return Err(format!(
            "rho_dagger {} vs {}",
            prof.rho_dagger, want.rho_dagger
        ));
    }
    if prof.low_density_ids != want.low {
        return Err("low-density set differs".into());
    }

    let part = form_groups(&ix, &prof, k).map_err(|e| e.to_string())?;
    let (assignment, seeds) = groups(ps, &want.rho, &want.low, k);
    if part.assignment != assignment {
        return Err("group assignment differs".into());
    }
    for (g, s) in part.groups.iter().zip(&seeds) {
        if &g.seeds != s {
            return Err(format!("seeds of group {} differ", g.group_id));
        }
    }

    let scale = ps
        .coords()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for (variant, uniform) in [(Variant::Full, false), (Variant::G, true)] {
        for p in 0..n {
            let Some(g) = assignment[p] else { continue };
            let got = lib_force(p, g, &part.assignment, &ix, k, lambda, variant)
                .map_err(|e| e.to_string())?;
            let want = member_force(ps, p, &assignment, k, lambda, uniform);
            let mag = want.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (a, b) in got.iter().zip(&want) {
                if !close(*a, *b, tol, mag.max(lambda)) {
                    return Err(format!("{variant} force on {p}: {got:?} vs {want:?}"));
                }
            }
        }
        let cfg = ContractionConfig::new(k, lambda, 1).with_variant(variant);
        let (next, _) = contraction_step(ps, &part, &cfg, 1).map_err(|e| e.to_string())?;
        let (coords, _) = step(ps, &assignment, seeds.len(), k, lambda, uniform);
        for (i, (a, b)) in next.coords().iter().zip(&coords).enumerate() {
            if !close(*a, *b, tol, scale) {
                return Err(format!("{variant} step coordinate {i}: {a} vs {b}"));
            }
        }
    }
    Ok(())
}
