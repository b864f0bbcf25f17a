//! Point sets: loading, validation, standardization and synthetic fixtures.
//!
//! Coordinates are stored row-major in a single contiguous buffer. Point ids
//! are implicit (`0..n`).

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Errors raised while building, loading or transforming a [`PointSet`].
#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("point set must contain at least one point of dimension >= 1 (got n={n}, d={d})")]
    Empty { n: usize, d: usize },
    #[error("coordinate buffer has {len} values, expected n*d = {n}*{d}")]
    ShapeMismatch { len: usize, n: usize, d: usize },
    #[error("non-finite coordinate at point {point}, feature {feature}")]
    NonFinite { point: usize, feature: usize },
    #[error("label count {labels} does not match point count {points}")]
    LabelCount { labels: usize, points: usize },
    #[error("empty input: no data rows")]
    NoRows,
    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric cell at line {line}, column {column}: {value:?}")]
    NonNumeric {
        line: u64,
        column: usize,
        value: String,
    },
    #[error("label column {0} not found")]
    MissingLabelColumn(String),
    #[error("label column by name requires a header row")]
    NameWithoutHeader,
    #[error("standardization needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid fixture parameters: {0}")]
    InvalidFixture(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// N x d matrix of finite reals with optional ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    coords: Vec<f64>,
    n: usize,
    d: usize,
    labels: Option<Vec<usize>>,
}

impl PointSet {
    /// Builds a point set from a row-major buffer, validating every invariant.
    pub fn new(
        coords: Vec<f64>,
        n: usize,
        d: usize,
        labels: Option<Vec<usize>>,
    ) -> Result<Self, DatasetError> {
        if n == 0 || d == 0 {
            return Err(DatasetError::Empty { n, d });
        }
        if coords.len() != n * d {
            return Err(DatasetError::ShapeMismatch {
                len: coords.len(),
                n,
                d,
            });
        }
        if let Some(pos) = coords.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite {
                point: pos / d,
                feature: pos % d,
            });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(DatasetError::LabelCount {
                    labels: l.len(),
                    points: n,
                });
            }
        }
        Ok(Self {
            coords,
            n,
            d,
            labels,
        })
    }

    /// Builds a point set from rows of equal width.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> Result<Self, DatasetError> {
        let d = rows.first().map_or(0, Vec::len);
        let mut coords = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(DatasetError::RaggedRow {
                    line: i as u64 + 1,
                    expected: d,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::new(coords, rows.len(), d, labels)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    /// Row-major coordinate buffer.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Number of distinct labels, if labelled.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut seen: Vec<usize> = l.clone();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        })
    }

    /// Same labels, new coordinates. The caller guarantees finiteness; used by
    /// contraction where coordinates are produced from finite arithmetic.
    pub(crate) fn with_coords(&self, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), self.n * self.d);
        Self {
            coords,
            n: self.n,
            d: self.d,
            labels: self.labels.clone(),
        }
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }
}

/// Selects the label column of a delimited file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(s) => f.write_str(s),
        }
    }
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select by index; anything else selects by header name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Loads a comma-delimited file. The label column, when selected, is
/// factorized to `0..C` in order of first appearance.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<&LabelColumn>,
    has_header: bool,
) -> Result<PointSet, DatasetError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, label_column, has_header)
}

/// Reader-based variant of [`load_csv`].
pub fn read_csv<R: Read>(
    reader: R,
    label_column: Option<&LabelColumn>,
    has_header: bool,
) -> Result<PointSet, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let label_idx = match label_column {
        None => None,
        Some(LabelColumn::Index(i)) => Some(*i),
        Some(LabelColumn::Name(name)) => {
            if !has_header {
                return Err(DatasetError::NameWithoutHeader);
            }
            let headers = rdr.headers()?;
            Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| DatasetError::MissingLabelColumn(name.clone()))?,
            )
        }
    };

    let mut coords = Vec::new();
    let mut labels = Vec::new();
    let mut factor: HashMap<String, usize> = HashMap::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DatasetError::RaggedRow {
                line,
                expected,
                found: record.len(),
            });
        }
        if let Some(li) = label_idx {
            if li >= expected {
                return Err(DatasetError::MissingLabelColumn(li.to_string()));
            }
        }
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == label_idx {
                let next = factor.len();
                labels.push(*factor.entry(cell.to_string()).or_insert(next));
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => coords.push(v),
                _ => {
                    return Err(DatasetError::NonNumeric {
                        line,
                        column: col,
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows += 1;
    }

    if rows == 0 {
        return Err(DatasetError::NoRows);
    }
    let d = width.unwrap_or(0) - usize::from(label_idx.is_some());
    PointSet::new(coords, rows, d, label_idx.map(|_| labels))
}

/// Writes the point set in the same format [`load_csv`] reads: a header row
/// `x0..x{d-1}` plus `label` when labelled. Values use the shortest
/// round-tripping decimal representation.
pub fn write_csv<W: Write>(ps: &PointSet, writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..ps.dim()).map(|j| format!("x{j}")).collect();
    if ps.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ps.len() {
        row.clear();
        row.extend(ps.point(i).iter().map(|v| format!("{v:?}")));
        if let Some(l) = ps.labels() {
            row.push(l[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ps: &PointSet, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path)?;
    write_csv(ps, std::io::BufWriter::new(file))
}

/// Per-column z-score with population standard deviation. Zero-variance
/// columns become all-zero.
pub fn standardize(ps: &PointSet) -> Result<PointSet, DatasetError> {
    let (n, d) = (ps.len(), ps.dim());
    if n < 2 {
        return Err(DatasetError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(ps.point(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);

    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(ps.point(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd: Vec<f64> = var.iter().map(|s| (s / nf).sqrt()).collect();

    let mut out = ps.coords().to_vec();
    for row in out.chunks_exact_mut(d) {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&sd) {
            // Columns whose spread is pure rounding noise count as constant.
            *v = if *s > f64::EPSILON * m.abs() {
                (*v - m) / s
            } else {
                0.0
            };
        }
    }
    Ok(ps.with_coords(out))
}

/// Parameters for [`make_blobs`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n_points: usize,
    pub dim: usize,
    pub n_clusters: usize,
    /// Per-cluster isotropic standard deviation.
    pub spread: f64,
    /// Minimum distance between cluster centers.
    pub separation: f64,
    pub seed: u64,
}

/// Isotropic Gaussian clusters.
///
/// Centers sit on a cubic lattice of spacing `separation` (so every pair of
/// centers is at least `separation` apart and nearest pairs are exactly that
/// far), shuffled over the lattice sites and shifted by a random offset.
/// Points are emitted cluster by cluster; the label is the generating cluster.
/// Sizes differ by at most one, with earlier clusters taking the remainder.
pub fn make_blobs(spec: &BlobSpec) -> Result<PointSet, DatasetError> {
    let BlobSpec {
        n_points,
        dim,
        n_clusters,
        spread,
        separation,
        seed,
    } = *spec;
    if n_clusters == 0 || n_clusters > n_points {
        return Err(DatasetError::InvalidFixture(format!(
            "need 1 <= n_clusters <= n_points (got {n_clusters} clusters, {n_points} points)"
        )));
    }
    if dim == 0 {
        return Err(DatasetError::InvalidFixture("dim must be >= 1".into()));
    }
    if !(spread > 0.0 && separation > 0.0 && spread.is_finite() && separation.is_finite()) {
        return Err(DatasetError::InvalidFixture(
            "spread and separation must be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Smallest lattice side with at least n_clusters sites.
    let mut side = 1usize;
    while side.checked_pow(dim as u32).is_some_and(|s| s < n_clusters) {
        side += 1;
    }
    let site_count = side.checked_pow(dim as u32).unwrap_or(usize::MAX);
    // Only enumerate what we need: take the first sites in a shuffled prefix.
    let candidate_sites = site_count.min(n_clusters.max(2) * 4).min(site_count);
    let mut sites: Vec<usize> = (0..candidate_sites).collect();
    sites.shuffle(&mut rng);
    sites.truncate(n_clusters);

    let offset: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * separation).collect();
    let centers: Vec<Vec<f64>> = sites
        .iter()
        .map(|&site| {
            let mut rem = site;
            (0..dim)
                .map(|j| {
                    let c = rem % side;
                    rem /= side;
                    c as f64 * separation + offset[j]
                })
                .collect()
        })
        .collect();

    let base = n_points / n_clusters;
    let extra = n_points % n_clusters;
    let mut coords = Vec::with_capacity(n_points * dim);
    let mut labels = Vec::with_capacity(n_points);
    for (c, center) in centers.iter().enumerate() {
        let size = base + usize::from(c < extra);
        for _ in 0..size {
            for &mu in center {
                let z: f64 = rng.sample(StandardNormal);
                coords.push(mu + spread * z);
            }
            labels.push(c);
        }
    }
    PointSet::new(coords, n_points, dim, Some(labels))
}

/// Uniform points in the unit hypercube, unlabelled.
pub fn make_uniform(n_points: usize, dim: usize, seed: u64) -> Result<PointSet, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n_points * dim).map(|_| rng.random::<f64>()).collect();
    PointSet::new(coords, n_points, dim, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, d: usize, k: usize, spread: f64, sep: f64, seed: u64) -> PointSet {
        make_blobs(&BlobSpec {
            n_points: n,
            dim: d,
            n_clusters: k,
            spread,
            separation: sep,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn minimal_row_without_labels() {
        let ps = read_csv("1.0,2.0\n".as_bytes(), None, false).unwrap();
        assert_eq!((ps.len(), ps.dim()), (1, 2));
        assert_eq!(ps.point(0), &[1.0, 2.0]);
        assert!(ps.labels().is_none());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = read_csv("1,2,3\n4,5,6,7\n".as_bytes(), None, false).unwrap_err();
        match err {
            DatasetError::RaggedRow {
                line,
                expected,
                found,
            } => assert_eq!((line, expected, found), (2, 3, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let err = read_csv("a,b\n1,2\n3,x\n".as_bytes(), None, true).unwrap_err();
        match err {
            DatasetError::NonNumeric { line, column, .. } => assert_eq!((line, column), (3, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(
            read_csv("".as_bytes(), None, false),
            Err(DatasetError::NoRows)
        ));
        assert!(matches!(
            read_csv("a,b\n".as_bytes(), None, true),
            Err(DatasetError::NoRows)
        ));
    }

    #[test]
    fn labels_factorized_by_first_appearance() {
        let text = "f1,class,f2\n1,SIRA,2\n3,BARBUNYA,4\n5,SIRA,6\n7,CALI,8\n";
        let by_name = read_csv(
            text.as_bytes(),
            Some(&LabelColumn::Name("class".into())),
            true,
        )
        .unwrap();
        assert_eq!(by_name.labels().unwrap(), &[0, 1, 0, 2]);
        assert_eq!(by_name.dim(), 2);
        assert_eq!(by_name.point(1), &[3.0, 4.0]);
        let by_index = read_csv(text.as_bytes(), Some(&LabelColumn::Index(1)), true).unwrap();
        assert_eq!(by_index, by_name);
    }

    #[test]
    fn missing_label_column() {
        let err = read_csv(
            "a,b\n1,2\n".as_bytes(),
            Some(&LabelColumn::Name("class".into())),
            true,
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::MissingLabelColumn(_)));
    }

    #[test]
    fn non_finite_rejected() {
        let err = PointSet::new(vec![1.0, f64::NAN], 1, 2, None).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::NonFinite {
                point: 0,
                feature: 1
            }
        ));
        assert!(read_csv("1,inf\n".as_bytes(), None, false).is_err());
    }

    #[test]
    fn standardize_two_point_column() {
        let ps = PointSet::new(vec![1.0, 3.0], 2, 1, None).unwrap();
        assert_eq!(standardize(&ps).unwrap().coords(), &[-1.0, 1.0]);
    }

    #[test]
    fn standardize_constant_column() {
        let ps = PointSet::new(vec![5.0, 5.0, 5.0], 3, 1, None).unwrap();
        assert_eq!(standardize(&ps).unwrap().coords(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn standardize_needs_two_points() {
        let ps = PointSet::new(vec![5.0], 1, 1, None).unwrap();
        assert!(matches!(
            standardize(&ps),
            Err(DatasetError::TooFewPoints(1))
        ));
    }

    #[test]
    fn standardize_random_matrix_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coords: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 50.0 - 7.0).collect();
        let ps = PointSet::new(coords, 100, 4, None).unwrap();
        let z = standardize(&ps).unwrap();
        // Recompute column statistics directly.
        for j in 0..4 {
            let col: Vec<f64> = (0..100).map(|i| z.point(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / 100.0;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
            assert!(mean.abs() < 1e-12, "mean {mean}");
            assert!((sd - 1.0).abs() < 1e-12, "sd {sd}");
        }
    }

    #[test]
    fn one_point_per_cluster_blobs() {
        let ps = blobs(4, 2, 4, 0.01, 10.0, 0);
        assert_eq!(ps.len(), 4);
        assert_eq!(ps.labels().unwrap(), &[0, 1, 2, 3]);
        for i in 0..4 {
            for j in (i + 1)..4 {
                let dist: f64 = ps
                    .point(i)
                    .iter()
                    .zip(ps.point(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist >= 9.0, "{i}-{j}: {dist}");
            }
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = blobs(300, 3, 5, 1.0, 6.0, 7);
        let b = blobs(300, 3, 5, 1.0, 6.0, 7);
        assert_eq!(a, b);
        let c = blobs(300, 3, 5, 1.0, 6.0, 8);
        assert_ne!(a.coords(), c.coords());
    }

    #[test]
    fn blob_precondition() {
        let err = make_blobs(&BlobSpec {
            n_points: 2,
            dim: 2,
            n_clusters: 3,
            spread: 1.0,
            separation: 1.0,
            seed: 0,
        });
        assert!(err.is_err());
    }

    #[test]
    fn label_column_parsing() {
        assert_eq!("3".parse::<LabelColumn>().unwrap(), LabelColumn::Index(3));
        assert_eq!(
            "Class".parse::<LabelColumn>().unwrap(),
            LabelColumn::Name("Class".into())
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn csv_round_trip(
                rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..40),
                labelled in any::<bool>(),
            ) {
                let labels = labelled.then(|| (0..rows.len()).map(|i| i % 3).collect::<Vec<_>>());
                let ps = PointSet::from_rows(&rows, labels).unwrap();
                let mut buf = Vec::new();
                write_csv(&ps, &mut buf).unwrap();
                let sel = LabelColumn::Name("label".into());
                let back = read_csv(buf.as_slice(), labelled.then_some(&sel), true).unwrap();
                for (a, b) in ps.coords().iter().zip(back.coords()) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                }
                if labelled {
                    // First-appearance factorization of i % 3 is the identity.
                    prop_assert_eq!(back.labels(), ps.labels());
                }
            }

            #[test]
            fn standardize_is_idempotent(
                rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 2), 2..50),
            ) {
                let ps = PointSet::from_rows(&rows, None).unwrap();
                let once = standardize(&ps).unwrap();
                let twice = standardize(&once).unwrap();
                for (a, b) in once.coords().iter().zip(twice.coords()) {
                    prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
                }
            }
        }
    }
}
