mod common;

use proptest::prelude::*;
use rrboost::tree::{fit_tree, SplitCriterion};

use common::{check_stump, random_problem, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn stumps_match_exhaustive_search(
        seed in any::<u64>(),
        n in 2usize..=50,
        p in 1usize..=3,
        min_node in 1usize..=5,
        coarse in any::<bool>(),
    ) {
        let (x, y) = random_problem(&mut rng(seed), n, p, coarse);
        for crit in [SplitCriterion::LeastSquares, SplitCriterion::LeastAbsolute] {
            if let Err(msg) = check_stump(&x, &y, crit, min_node) {
                prop_assert!(false, "{:?}: {}", crit, msg);
            }
        }
    }

    #[test]
    fn leaves_respect_min_node_and_depth(
        seed in any::<u64>(),
        n in 2usize..=60,
        depth in 0usize..=4,
        min_node in 1usize..=8,
    ) {
        let (x, y) = random_problem(&mut rng(seed), n, 3, false);
        for crit in [SplitCriterion::LeastSquares, SplitCriterion::LeastAbsolute] {
            let tree = fit_tree(&x, &y, crit, depth, min_node).unwrap();
            prop_assert!(tree.depth() <= depth);
            let mut counts = std::collections::HashMap::new();
            for r in x.rows() {
                *counts.entry(tree.predict_row(r).to_bits()).or_insert(0usize) += 1;
            }
            if tree.depth() > 0 {
                // distinct leaves may share a value, so counts are per value: still ≥ min_node
                prop_assert!(counts.values().all(|&c| c >= min_node));
            }
        }
    }
}

#[test]
fn least_squares_training_error_never_exceeds_the_mean() {
    let mut r = rng(11);
    for _ in 0..50 {
        let (x, y) = random_problem(&mut r, 40, 3, false);
        let tree = fit_tree(&x, &y, SplitCriterion::LeastSquares, 3, 2).unwrap();
        let sse: f64 = x.rows().zip(&y).map(|(row, v)| (v - tree.predict_row(row)).powi(2)).sum();
        assert!(sse <= common::impurity(&y, SplitCriterion::LeastSquares) + 1e-9);
    }
}
