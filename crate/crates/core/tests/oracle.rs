mod common;

use common::{compare_with_oracle, random_instance};
use gcao::dataset::PointSet;

#[test]
fn random_instances_match_reference() {
    for case in 0..12 {
        let ps = random_instance(case);
        let k = 1 + (case as usize % 8).min(ps.len() - 2);
        compare_with_oracle(&ps, k, 0.2 + 0.15 * case as f64, 1e-9)
            .unwrap_or_else(|e| panic!("case {case}: {e}"));
    }
}

#[test]
fn grid_data_with_exact_ties_matches_reference() {
    // Integer lattice: many equal distances exercise every tie-break rule.
    let rows: Vec<Vec<f64>> = (0..60)
        .map(|i| vec![(i % 8) as f64, (i / 8) as f64])
        .collect();
    let ps = PointSet::from_rows(&rows, None).unwrap();
    for k in [1, 3, 4, 7] {
        compare_with_oracle(&ps, k, 0.5, 1e-9).unwrap_or_else(|e| panic!("k={k}: {e}"));
    }
}
