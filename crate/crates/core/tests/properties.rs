use cmid::cmi::{estimated_cmi_value, hard_cmi, CmiConfig};
use cmid::datagen::{Dataset, DatasetMeta};
use cmid::eval::{metrics_from_predictions, randomize_coord_accuracy, GapReport, ShapeBias};
use cmid::math::{RngStream, Tensor};
use cmid::models::{init_model, ModelKind};
use proptest::prelude::*;

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0..k, n)
}

proptest! {
    #[test]
    fn hard_cmi_is_nonnegative_and_label_permutation_invariant(
        (m, ms, y) in (4usize..60).prop_flat_map(|n| (labels(n, 3), labels(n, 3), labels(n, 3))),
        shift in 1usize..3,
    ) {
        let v = hard_cmi(&m, &ms, &y, 3).unwrap();
        prop_assert!(v >= -1e-12);
        let relabeled: Vec<usize> = ms.iter().map(|&c| (c + shift) % 3).collect();
        prop_assert!((hard_cmi(&m, &relabeled, &y, 3).unwrap() - v).abs() < 1e-9);
    }

    #[test]
    fn identical_predictors_share_all_information(m in labels(40, 2), y in labels(40, 2)) {
        // I(M; M | Y) = H(M | Y), which is zero only when M is constant within each class
        let v = hard_cmi(&m, &m, &y, 2).unwrap();
        let constant = (0..2).all(|c| {
            let mut it = m.iter().zip(&y).filter(|(_, &yy)| yy == c).map(|(a, _)| *a);
            it.next().is_none_or(|first| it.all(|a| a == first))
        });
        prop_assert_eq!(v < 1e-6, constant);
    }

    #[test]
    fn estimated_cmi_is_nonnegative(seed in 0u64..1000, n in 4usize..64, t in 0.5f64..100.0) {
        let mut rng = RngStream::new(seed);
        let p = Tensor::matrix(n, 1, (0..n).map(|_| rng.next_f64()).collect()).unwrap();
        let q = Tensor::matrix(n, 1, (0..n).map(|_| rng.next_f64()).collect()).unwrap();
        let y: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
        let cfg = CmiConfig { temperature: t, ..CmiConfig::new(2) };
        prop_assert!(estimated_cmi_value(&p, &q, &y, &cfg).unwrap() >= -1e-12);
    }

    #[test]
    fn shape_bias_stays_in_range(a in 0usize..500, b in 0usize..500, c in 0usize..500) {
        match ShapeBias::from_counts(a, b, c) {
            Ok(s) => {
                prop_assert!((0.0..=100.0).contains(&s.value));
                prop_assert!((s.value + s.texture_fraction() - 100.0).abs() < 1e-9);
            }
            Err(_) => prop_assert_eq!(a + b, 0),
        }
    }

    #[test]
    fn delta_gap_is_scaled_difference(iid in 0.0f64..=1.0, ood in 0.0f64..=1.0) {
        let g = GapReport::from_accuracies(iid, ood);
        prop_assert!((g.delta_gap - 100.0 * (ood - iid)).abs() < 1e-12);
    }

    #[test]
    fn worst_group_bounds_overall_accuracy(pred in labels(50, 2), y in labels(50, 2), groups in labels(50, 4)) {
        let x = Tensor::matrix(50, 1, vec![0.0; 50]).unwrap();
        let mut ds = Dataset::new(x, y, 2, DatasetMeta::new("prop", &0, 0)).unwrap();
        ds.groups = Some(groups);
        let m = metrics_from_predictions(&pred, &ds).unwrap();
        prop_assert!(m.worst_group <= m.accuracy + 1e-12);
    }

    #[test]
    fn randomizing_an_ignored_coordinate_changes_nothing(seed in 0u64..200, shuffle_seed in 0u64..200) {
        let mut model = init_model(ModelKind::Linear, 3, 2, seed).unwrap();
        model.layers[0].weight.data_mut()[2] = 0.0;
        let mut rng = RngStream::new(seed + 1);
        let x = Tensor::matrix(64, 3, (0..192).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let y: Vec<usize> = (0..64).map(|_| rng.below(2)).collect();
        let ds = Dataset::new(x, y, 2, DatasetMeta::new("prop", &0, 0)).unwrap();
        let base = cmid::eval::metrics(&model, &ds).unwrap().accuracy;
        prop_assert_eq!(randomize_coord_accuracy(&model, &ds, 2, shuffle_seed).unwrap(), base);
    }

    #[test]
    fn derived_streams_are_reproducible(seed in any::<u64>(), idx in any::<u64>()) {
        let a: Vec<u64> = { let mut r = RngStream::derive(seed, idx); (0..8).map(|_| r.next_u64()).collect() };
        let b: Vec<u64> = { let mut r = RngStream::derive(seed, idx); (0..8).map(|_| r.next_u64()).collect() };
        prop_assert_eq!(&a, &b);
        let mut other = RngStream::derive(seed, idx.wrapping_add(1));
        prop_assert_ne!(a, (0..8).map(|_| other.next_u64()).collect::<Vec<_>>());
    }
}
