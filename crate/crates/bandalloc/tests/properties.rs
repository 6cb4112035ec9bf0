//! Property tests over randomized inputs: the structural invariants that
//! must hold for *every* instance, not just the reference scenarios.

use bandalloc::birkhoff::{
    decompose, pad_to_doubly_stochastic, reconstruct, term_count_bound, DoublyStochasticMatrix,
};
use bandalloc::model::SuccessMatrix;
use bandalloc::stability::{closed_form_2x2, max_rate_lp, AssignmentMatrix, RegionQuery};
use proptest::prelude::*;

/// A doubly stochastic matrix as a convex mixture of random permutations.
fn doubly_stochastic(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2..=max_n)
        .prop_flat_map(|n| {
            let perm = Just((0..n).collect::<Vec<usize>>()).prop_shuffle();
            let terms = proptest::collection::vec((perm, 0.01f64..1.0), 1..=8);
            (Just(n), terms)
        })
        .prop_map(|(n, terms)| {
            let total: f64 = terms.iter().map(|(_, w)| w).sum();
            let mut values = vec![0.0; n * n];
            for (perm, w) in &terms {
                for (su, &band) in perm.iter().enumerate() {
                    values[band * n + su] += w / total;
                }
            }
            (n, values)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_round_trips((n, values) in doubly_stochastic(8)) {
        let ds = DoublyStochasticMatrix::from_raw(n, values.clone()).unwrap();
        let schedule = decompose(&ds).unwrap();
        prop_assert!(schedule.num_terms() <= term_count_bound(n));
        prop_assert!((schedule.total_weight() - 1.0).abs() < 1e-9);

        let back = reconstruct(&schedule);
        for (i, expected) in values.iter().enumerate() {
            prop_assert!((back.get(i / n, i % n) - expected).abs() < 1e-9);
            prop_assert!((schedule.marginal(i / n, i % n) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn padding_preserves_real_entries(
        (n, values) in doubly_stochastic(6),
        row_scale in 0.2f64..1.0,
        col_scale in 0.2f64..1.0,
    ) {
        // Scale a doubly stochastic matrix down to a strictly substochastic
        // one; padding must copy it verbatim and saturate every sum.
        let scaled: Vec<f64> = values.iter().map(|v| v * row_scale * col_scale).collect();
        let omega = AssignmentMatrix::new(n, n, scaled).unwrap();
        let padded = pad_to_doubly_stochastic(&omega).unwrap();

        for j in 0..n {
            for k in 0..n {
                prop_assert_eq!(padded.get(j, k), omega.get(j, k));
            }
        }
        let size = padded.size();
        for i in 0..size {
            let row: f64 = (0..size).map(|c| padded.get(i, c)).sum();
            let col: f64 = (0..size).map(|r| padded.get(r, i)).sum();
            prop_assert!((row - 1.0).abs() < 1e-9);
            prop_assert!((col - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_agrees_with_lp(
        entries in proptest::array::uniform4(0.0f64..1.0),
        load in 0.0f64..1.1,
    ) {
        let p = SuccessMatrix::from_values(2, 2, entries.to_vec()).unwrap();
        // Sweep over the interesting range, including infeasible territory.
        let lambda_1 = load * p.get(0, 0).max(p.get(1, 0));

        let closed = closed_form_2x2(&p, lambda_1).unwrap();
        let lp = max_rate_lp(
            &p,
            &RegionQuery::new(2, 1).unwrap().with_rate(0, lambda_1).unwrap(),
        )
        .unwrap();

        prop_assert_eq!(closed.feasible, lp.feasible);
        if closed.feasible {
            prop_assert!((closed.lambda_s2_max - lp.rates[1]).abs() < 1e-9);
        }
    }
}
