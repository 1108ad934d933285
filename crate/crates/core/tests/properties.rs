use hip::data::{standardize_subgroup, CountOutcome};
use hip::linalg::orthonormal_columns;
use hip::losses::zip_loss;
use hip::predict::{predict_scores, selection_metrics};
use hip::selection::{k_from_singular_values, log_binomial_sum, rank_loadings, SearchMode, SearchSpec};
use hip::{Family, MultiViewDataset, OutcomeData, Subgroup, ViewInfo};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-5.0..5.0f64, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn ln_choose(n: u64, k: u64) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardizing_twice_changes_nothing(x in matrix(12, 4), y in matrix(9, 4)) {
        let outcome = |n| Some(OutcomeData::Counts(CountOutcome::unit_offsets(Array1::ones(n))));
        let data = MultiViewDataset {
            family: Family::Poisson,
            views: vec![ViewInfo::numbered("view1", 4)],
            subgroups: vec![
                Subgroup { name: "a".into(), views: vec![x], outcome: outcome(12) },
                Subgroup { name: "b".into(), views: vec![y], outcome: outcome(9) },
            ],
        };
        let (once, _) = standardize_subgroup(&data);
        let (twice, _) = standardize_subgroup(&once);
        for s in 0..2 {
            let diff = (once.x(0, s) - twice.x(0, s)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(diff < 1e-12);
        }
    }

    #[test]
    fn zip_loss_is_finite_and_above_the_poisson_zero_mass(
        y in prop::collection::vec(0u32..6, 8),
        eta in prop::collection::vec(-3.0..3.0f64, 8),
        tau in 0.01..0.99f64,
    ) {
        let counts = CountOutcome::unit_offsets(Array1::from_iter(y.iter().map(|&v| f64::from(v))));
        let z = Array2::from_shape_vec((8, 1), eta).unwrap();
        let theta = Array2::ones((1, 1));
        let loss = zip_loss(&counts, z.view(), theta.view(), Array1::zeros(1).view(), tau).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
    }

    #[test]
    fn projection_inverts_orthonormal_loadings(b in matrix(9, 2), z in matrix(6, 2)) {
        let q = orthonormal_columns(b.view());
        prop_assume!(q.iter().all(|v| v.is_finite()));
        let x = z.dot(&q.t());
        let (pred, _) = predict_scores(&[&x], std::slice::from_ref(&q)).unwrap();
        let err = (&pred - &z).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(err < 1e-8);
    }

    #[test]
    fn binomial_sum_matches_direct_enumeration(p in 1u64..60, low in 0u64..30, width in 0u64..30) {
        let high = low + width;
        prop_assume!(low <= p);
        let direct: f64 = (low..=high.min(p)).map(|w| ln_choose(p, w).exp()).sum::<f64>().ln();
        let got = log_binomial_sum(p as usize, low as usize, high as usize);
        prop_assert!((got - direct).abs() < 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn union_size_is_bounded(b1 in matrix(10, 2), b2 in matrix(10, 2), n_top in 1usize..10) {
        let sel = rank_loadings(&[vec![b1, b2]], &[n_top]).unwrap();
        prop_assert!(sel.union[0].len() >= n_top && sel.union[0].len() <= 2 * n_top);
        prop_assert_eq!(sel.nu, sel.union[0].len());
        for w in sel.ranked[0][0].scores.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn selection_rates_lie_in_the_unit_interval(
        truth in prop::collection::btree_set(0usize..30, 0..30),
        selected in prop::collection::btree_set(0usize..30, 0..30),
    ) {
        let t: Vec<usize> = truth.into_iter().collect();
        let s: Vec<usize> = selected.into_iter().collect();
        let m = selection_metrics(&t, &s, 30).unwrap();
        for v in [m.tpr, m.fpr, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn random_candidates_are_grid_pairs(steps in 2usize..12, frac in 0.01..1.0f64, seed in 0u64..1000) {
        let spec = SearchSpec { num_steps: steps, random_fraction: frac, seed, ..SearchSpec::new(vec![1]) };
        let random = spec.candidates();
        let grid = SearchSpec { mode: SearchMode::Grid, ..spec.clone() }.candidates();
        prop_assert_eq!(random.len(), ((frac * (steps * steps) as f64).ceil() as usize).max(1));
        prop_assert!(random.iter().all(|c| grid.contains(c)));
        prop_assert!(random.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn scree_rank_is_within_range(mut sv in prop::collection::vec(0.01..100.0f64, 2..10), threshold in 0.01..0.99f64) {
        sv.sort_by(|a, b| b.total_cmp(a));
        let k = k_from_singular_values(&sv, threshold).unwrap();
        prop_assert!(k >= 1 && k < sv.len().max(2));
    }
}
