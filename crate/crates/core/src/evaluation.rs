//! External clustering-validity metrics: NMI, ARI, homogeneity and ACC.
//!
//! All metrics are computed from a contingency table between ground-truth
//! classes (rows) and predicted clusters (columns). Entropies use natural
//! logarithms.
//!
//! Degenerate conventions: NMI is 0 when either labelling has zero entropy,
//! homogeneity is 1 when the truth has zero entropy, and ARI is 0 when its
//! denominator vanishes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("label length mismatch: truth={truth}, predicted={predicted}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("need at least {needed} labels, got {got}")]
    TooFew { needed: usize, got: usize },
}

/// Class-by-cluster count matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// Row-major `rows x cols`.
    counts: Vec<u64>,
    rows: usize,
    cols: usize,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let map: HashMap<usize, usize> = distinct.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    (labels.iter().map(|l| map[l]).collect(), distinct.len())
}

impl ContingencyTable {
    /// Builds the table from raw count rows.
    pub fn from_counts(rows: &[Vec<u64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let counts: Vec<u64> = rows.iter().flat_map(|row| row.iter().copied()).collect();
        assert_eq!(counts.len(), r * c, "ragged contingency rows");
        let row_sums: Vec<u64> = rows.iter().map(|row| row.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..c)
            .map(|j| rows.iter().map(|row| row[j]).sum())
            .collect();
        let total = row_sums.iter().sum();
        Self {
            counts,
            rows: r,
            cols: c,
            row_sums,
            col_sums,
            total,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    /// True when each class maps to exactly one cluster and vice versa.
    pub fn is_bijective(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..self.cols).filter(|&j| self.get(i, j) > 0).count() == 1)
            && (0..self.cols).all(|j| (0..self.rows).filter(|&i| self.get(i, j) > 0).count() == 1)
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.cols.max(1))
            .map(<[u64]>::to_vec)
            .collect()
    }
}

/// `counts[i][j] = |truth class i ∩ predicted cluster j|`, classes and
/// clusters indexed in ascending label order.
pub fn contingency(truth: &[usize], pred: &[usize]) -> Result<ContingencyTable, MetricError> {
    if truth.len() != pred.len() {
        return Err(MetricError::LengthMismatch {
            truth: truth.len(),
            predicted: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricError::TooFew { needed: 1, got: 0 });
    }
    let (t, r) = compact(truth);
    let (p, c) = compact(pred);
    let mut rows = vec![vec![0u64; c]; r];
    for (&i, &j) in t.iter().zip(&p) {
        rows[i][j] += 1;
    }
    Ok(ContingencyTable::from_counts(&rows))
}

/// Sums terms in ascending order so the result does not depend on how the
/// labels were numbered.
fn canonical_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn entropy(counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    -canonical_sum(
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .collect(),
    )
}

fn mutual_information(tab: &ContingencyTable) -> f64 {
    let n = tab.total as f64;
    let mut terms = Vec::new();
    for i in 0..tab.rows {
        for j in 0..tab.cols {
            let c = tab.get(i, j);
            if c == 0 {
                continue;
            }
            let nij = c as f64;
            let (ai, bj) = (tab.row_sums[i] as f64, tab.col_sums[j] as f64);
            terms.push((nij / n) * ((nij * n) / (ai * bj)).ln());
        }
    }
    canonical_sum(terms).max(0.0)
}

/// Mutual information normalized by the geometric mean of the entropies.
pub fn nmi(tab: &ContingencyTable) -> f64 {
    let hu = entropy(&tab.row_sums, tab.total);
    let hv = entropy(&tab.col_sums, tab.total);
    if hu == 0.0 || hv == 0.0 {
        return 0.0;
    }
    if tab.is_bijective() {
        return 1.0;
    }
    (mutual_information(tab) / (hu * hv).sqrt()).clamp(0.0, 1.0)
}

/// H(truth | predicted).
fn conditional_entropy(tab: &ContingencyTable) -> f64 {
    let n = tab.total as f64;
    let mut terms = Vec::new();
    for j in 0..tab.cols {
        let bj = tab.col_sums[j] as f64;
        for i in 0..tab.rows {
            let c = tab.get(i, j);
            if c > 0 {
                let nij = c as f64;
                terms.push((nij / n) * (nij / bj).ln());
            }
        }
    }
    (-canonical_sum(terms)).max(0.0)
}

/// `1 - H(truth | predicted) / H(truth)`; 1 when the truth has one class.
pub fn homogeneity(tab: &ContingencyTable) -> f64 {
    let hu = entropy(&tab.row_sums, tab.total);
    if hu == 0.0 {
        return 1.0;
    }
    (1.0 - conditional_entropy(tab) / hu).clamp(0.0, 1.0)
}

#[inline]
fn pairs(x: u64) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

/// Adjusted Rand index from pair counts. The numerator and denominator are
/// formed exactly in integers and divided once.
pub fn ari(tab: &ContingencyTable) -> Result<f64, MetricError> {
    if tab.total < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: tab.total as usize,
        });
    }
    let together: i128 = tab.counts.iter().map(|&c| pairs(c)).sum();
    let same_class: i128 = tab.row_sums.iter().map(|&c| pairs(c)).sum();
    let same_cluster: i128 = tab.col_sums.iter().map(|&c| pairs(c)).sum();
    let all = pairs(tab.total);
    // ARI = (together - sc*sk/all) / ((sc+sk)/2 - sc*sk/all), scaled by 2*all.
    let num = 2 * (all * together - same_class * same_cluster);
    let den = all * (same_class + same_cluster) - 2 * same_class * same_cluster;
    if den == 0 {
        return Ok(0.0);
    }
    Ok(num as f64 / den as f64)
}

/// Best one-to-one matching accuracy between clusters and classes.
pub fn acc(tab: &ContingencyTable) -> f64 {
    let size = tab.rows.max(tab.cols);
    // Square profit matrix padded with zeros.
    let mut profit = vec![0i64; size * size];
    for i in 0..tab.rows {
        for j in 0..tab.cols {
            profit[i * size + j] = tab.get(i, j) as i64;
        }
    }
    let matched = max_weight_assignment(&profit, size);
    matched as f64 / tab.total as f64
}

/// Hungarian algorithm (shortest augmenting paths, O(n^3)) maximizing the
/// total weight of a perfect matching on a square matrix. Returns the total.
pub fn max_weight_assignment(weights: &[i64], n: usize) -> i64 {
    if n == 0 {
        return 0;
    }
    let max_w = weights.iter().copied().max().unwrap_or(0);
    // Minimize cost = max_w - weight.
    let cost = |i: usize, j: usize| max_w - weights[i * n + j];
    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1]; // column -> matched row (1-based, 0 = none)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n)
        .filter(|&j| row_of[j] != 0)
        .map(|j| weights[(row_of[j] - 1) * n + (j - 1)])
        .sum()
}

/// The four external metrics together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub nmi: f64,
    pub ari: f64,
    pub homogeneity: f64,
    pub acc: f64,
}

pub fn evaluate(truth: &[usize], pred: &[usize]) -> Result<Metrics, MetricError> {
    let tab = contingency(truth, pred)?;
    Ok(Metrics {
        nmi: nmi(&tab),
        ari: ari(&tab)?,
        homogeneity: homogeneity(&tab),
        acc: acc(&tab),
    })
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub standardize: f64,
    pub density: f64,
    pub grouping: f64,
    pub contraction: f64,
    pub clustering: f64,
    pub metrics: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.load
            + self.standardize
            + self.density
            + self.grouping
            + self.contraction
            + self.clustering
            + self.metrics
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub nmi: f64,
    pub ari: f64,
    pub homogeneity: f64,
    pub acc: f64,
    pub timings: StageTimings,
}

impl EvaluationReport {
    pub fn new(m: Metrics, timings: StageTimings) -> Self {
        Self {
            nmi: m.nmi,
            ari: m.ari,
            homogeneity: m.homogeneity,
            acc: m.acc,
            timings,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            nmi: self.nmi,
            ari: self.ari,
            homogeneity: self.homogeneity,
            acc: self.acc,
        }
    }
}
