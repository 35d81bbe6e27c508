mod support;

use assignkit::matching::{solve_assignment, solve_b_matching, Label};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use support::{brute_force_b_matching, brute_force_min_cost, random_matrix, rng};

fn matched_sum(cost: &Array2<f64>, labels: &[Label]) -> f64 {
    labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.object().map(|k| cost[[i, k]]))
        .sum()
}

#[test]
fn hungarian_is_optimal_against_permutations() {
    let mut r = rng(21);
    for case in 0..600 {
        let k = r.random_range(1..=7);
        let m = r.random_range(k..=7);
        let cost = random_matrix(&mut r, m, k, case % 2 == 0);
        let got = solve_assignment(&cost).unwrap();
        let best = brute_force_min_cost(&cost);
        assert_eq!(got.total_cost, best, "case {case}: {cost:?}");
        let counts = got.assignment.counts_per_gt(k);
        assert!(counts.iter().all(|&c| c == 1));
        assert!((matched_sum(&cost, got.assignment.labels()) - best).abs() < 1e-12);
    }
}

#[test]
fn b_matching_against_exhaustive_search() {
    let mut r = rng(22);
    for b in [2, 3] {
        for case in 0..60 {
            let cost = random_matrix(&mut r, 9, 2, case % 3 == 0);
            let got = solve_b_matching(&cost, b).unwrap();
            let best = brute_force_b_matching(&cost, b);
            assert!((got.total_cost - best).abs() < 1e-12, "b={b} case {case}");
            assert_eq!(got.assignment.counts_per_gt(2), vec![b, b]);
        }
    }
}

#[test]
fn b_one_is_plain_assignment() {
    let mut r = rng(23);
    for _ in 0..200 {
        let k = r.random_range(1..=6);
        let m = r.random_range(k..=12);
        let cost = random_matrix(&mut r, m, k, false);
        assert_eq!(
            solve_b_matching(&cost, 1).unwrap(),
            solve_assignment(&cost).unwrap()
        );
    }
}

#[test]
fn b_multiplicity_is_exact() {
    let mut r = rng(24);
    for b in [1, 2, 4, 8] {
        for _ in 0..20 {
            let k = r.random_range(1..=4);
            let m = b * k + r.random_range(0..10);
            let cost = random_matrix(&mut r, m, k, false);
            let got = solve_b_matching(&cost, b).unwrap();
            assert_eq!(got.assignment.counts_per_gt(k), vec![b; k]);
            assert!(got.assignment.validate(m, k).is_ok());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// Adding a constant to one column moves every feasible assignment's
    /// cost by the same amount. Integer costs keep the arithmetic exact.
    #[test]
    fn column_shift_keeps_labels(
        k in 1usize..5,
        extra in 0usize..4,
        seed in any::<u64>(),
        col in 0usize..5,
        shift in -20i32..20,
    ) {
        let m = k + extra;
        let mut r = rng(seed);
        let cost = random_matrix(&mut r, m, k, true);
        let mut shifted = cost.clone();
        shifted.column_mut(col % k).mapv_inplace(|v| v + f64::from(shift));
        let a = solve_assignment(&cost).unwrap();
        let b = solve_assignment(&shifted).unwrap();
        prop_assert_eq!(a.assignment, b.assignment);
        prop_assert_eq!(b.total_cost, a.total_cost + f64::from(shift));
    }

    #[test]
    fn never_worse_than_identity_prefix(k in 1usize..6, extra in 0usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let cost = random_matrix(&mut r, k + extra, k, false);
        let got = solve_assignment(&cost).unwrap();
        let naive: f64 = (0..k).map(|j| cost[[j, j]]).sum();
        prop_assert!(got.total_cost <= naive + 1e-12);
    }
}
