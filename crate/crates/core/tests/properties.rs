mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use xprobe::crosstest::{center_kernel, kernel_pca_embed, Channel, CrossTestMatrix, Kernel};
use xprobe::imaging::{compose_fractional, make_baseline, BaselineStyle, Direction, ImageTensor, PatchSet};
use xprobe::msesearch::{find_mses, BeamConfig, Minimality, MseRecord};
use xprobe::oracle::{make_synthetic, ClassLabel, ConfidenceCache, Scorer, Squash, SyntheticKind, SyntheticOracleSpec};
use xprobe::report::{aggregate, percent_explained};
use xprobe::saliency::{auc, normalize_score, perturbation_curve, AttributionMap, CurveOptions, ModelCalibration, PerturbationCurve};

fn curve_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 2..60)
}

fn additive(weights: Vec<f64>) -> SyntheticOracleSpec {
    SyntheticOracleSpec::new(SyntheticKind::Additive {
        weights,
        squash: Squash::Clamp,
    })
}

proptest! {
    #[test]
    fn auc_lies_between_curve_extremes(values in curve_strategy()) {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let a = auc(&PerturbationCurve::new(Direction::Insertion, values).unwrap());
        prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
    }

    #[test]
    fn auc_of_reversed_curve_is_equal(values in curve_strategy()) {
        let forward = auc(&PerturbationCurve::new(Direction::Insertion, values.clone()).unwrap());
        let mut rev = values;
        rev.reverse();
        let backward = auc(&PerturbationCurve::new(Direction::Deletion, rev).unwrap());
        prop_assert!((forward - backward).abs() < 1e-12);
    }

    #[test]
    fn constant_curves_are_exact(c in 0.0f64..=1.0, steps in 1usize..200) {
        let curve = PerturbationCurve::new(Direction::Insertion, vec![c; steps + 1]).unwrap();
        prop_assert_eq!(auc(&curve), c);
    }

    #[test]
    fn normalization_is_increasing(b in 0.0f64..0.5, span in 0.01f64..0.5, s1 in 0.0f64..1.0, s2 in 0.0f64..1.0) {
        let cal = ModelCalibration { model: "m".into(), top1: b + span, baseline: b, dataset_id: "d".into() };
        let (n1, n2) = (normalize_score(s1, &cal).unwrap(), normalize_score(s2, &cal).unwrap());
        prop_assert_eq!(s1 < s2, n1 < n2);
    }

    #[test]
    fn deletion_equals_insertion_with_roles_swapped(
        values in prop::collection::vec(0.0f32..=1.0, 16),
        fraction in 0.0f64..=1.0,
    ) {
        let image = ImageTensor::new(8, 8, 3, (0..192).map(|i| (i % 13) as f32 / 12.0).collect()).unwrap();
        let blur = make_baseline(&image, BaselineStyle::Blur { sigma: 2.0 }).unwrap();
        let map = AttributionMap::new(4, 4, values, "p").unwrap();
        let del = compose_fractional(&image, &blur, &map, fraction, Direction::Deletion).unwrap();
        let ins = compose_fractional(&blur, &image, &map, fraction, Direction::Insertion).unwrap();
        prop_assert_eq!(del, ins);
    }

    #[test]
    fn additive_scores_are_monotone(weights in prop::collection::vec(0.0f64..0.3, 9), a in 0u64..512, b in 0u64..512) {
        let subject = common::subject("m", 3, 3, 2);
        let oracle = make_synthetic("m", &additive(weights), subject.grid()).unwrap();
        let cache = ConfidenceCache::new();
        let scorer = Scorer::new(&oracle, &cache);
        let small = PatchSet::from_bits(a & b, 9).unwrap();
        let large = PatchSet::from_bits(a, 9).unwrap();
        let (s, l) = (
            scorer.score_subset(&subject, small, ClassLabel(0)).unwrap(),
            scorer.score_subset(&subject, large, ClassLabel(0)).unwrap(),
        );
        prop_assert!(s <= l);
    }

    #[test]
    fn descending_ranking_inserts_faster(weights in prop::collection::vec(0.01f64..0.2, 9)) {
        // A map that ranks cells by their true weight beats the reversed map.
        let subject = common::subject("r", 3, 3, 2);
        let max = weights.iter().copied().fold(0.0, f64::max);
        let good: Vec<f32> = weights.iter().map(|w| (w / max) as f32).collect();
        let bad: Vec<f32> = good.iter().map(|v| 1.0 - v).collect();
        let oracle = make_synthetic("r", &additive(weights), subject.grid()).unwrap();
        let cache = ConfidenceCache::new();
        let scorer = Scorer::new(&oracle, &cache);
        let options = CurveOptions { steps: 9, ..CurveOptions::default() };
        let score = |v: Vec<f32>| {
            let map = AttributionMap::new(3, 3, v, "x").unwrap();
            auc(&perturbation_curve(&scorer, &subject, &map, ClassLabel(0), Direction::Insertion, &options).unwrap())
        };
        prop_assert!(score(good) >= score(bad) - 1e-12);
    }

    #[test]
    fn cache_is_transparent(weights in prop::collection::vec(-0.5f64..1.0, 9)) {
        let subject = common::subject("c", 3, 3, 2);
        let spec = SyntheticOracleSpec::new(SyntheticKind::Additive { weights, squash: Squash::Sigmoid });
        let oracle = make_synthetic("c", &spec, subject.grid()).unwrap();
        let config = BeamConfig { beam_width: 8, ..BeamConfig::default() };
        let (on, off) = (ConfidenceCache::new(), ConfidenceCache::disabled());
        let with = find_mses(&Scorer::new(&oracle, &on), &subject, &config).unwrap();
        let without = find_mses(&Scorer::new(&oracle, &off), &subject, &config).unwrap();
        prop_assert_eq!(with, without);
    }

    #[test]
    fn patch_set_hex_round_trips(bits in any::<u64>(), capacity in 1usize..=64) {
        let mask = if capacity == 64 { bits } else { bits & ((1u64 << capacity) - 1) };
        let set = PatchSet::from_bits(mask, capacity).unwrap();
        prop_assert_eq!(PatchSet::from_hex(&set.to_hex(), capacity).unwrap(), set);
        prop_assert_eq!(set.complement().complement(), set);
        prop_assert_eq!(set.len() + set.complement().len(), capacity);
    }

    #[test]
    fn centered_kernels_have_zero_sums(values in prop::collection::vec(-5.0f64..5.0, 36)) {
        let m = DMatrix::from_row_slice(6, 6, &values);
        let k = (&m + m.transpose()) / 2.0;
        let c = center_kernel(&k).unwrap();
        for i in 0..6 {
            prop_assert!(c.row(i).sum().abs() < 1e-10);
            prop_assert!(c.column(i).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn embedding_distances_follow_permutations(values in prop::collection::vec(0.0f64..1.0, 25), shift in 1usize..5) {
        let rows: Vec<Vec<f64>> = values.chunks(5).map(<[f64]>::to_vec).collect();
        let names: Vec<String> = (0..5).map(|i| format!("m{i}")).collect();
        let perm: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| rows[i][j]).collect()).collect();
        let matrix = |ins: Vec<Vec<f64>>, models: Vec<String>| CrossTestMatrix {
            models, del: ins.clone(), ins, dataset_id: "d".into(), map_method: "m".into(),
        };
        let kernel = Kernel::Rbf { gamma: Some(0.7) };
        // all four dims: distances are then fully determined by the kernel
        let a = kernel_pca_embed(&matrix(rows, names.clone()), Channel::Ins, kernel, 4).unwrap();
        let b = kernel_pca_embed(&matrix(permuted, perm.iter().map(|&i| names[i].clone()).collect()), Channel::Ins, kernel, 4).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                prop_assert!((a.distance(perm[i], perm[j]) - b.distance(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn percent_explained_is_monotone_and_bounded(sizes in prop::collection::vec(prop::option::of(1u32..9), 1..20)) {
        let images: Vec<String> = (0..sizes.len()).map(|i| format!("i{i}")).collect();
        let records: Vec<MseRecord> = sizes
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| MseRecord {
                image_id: format!("i{i}"),
                class: ClassLabel(0),
                patches: PatchSet::from_bits((1u64 << s) - 1, 9).unwrap(),
                confidence: 1.0,
                full_confidence: 1.0,
                minimality: Minimality::ImmediateSubsets,
            }))
            .collect();
        let curve = percent_explained(&images, &records, 9);
        prop_assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(curve.iter().all(|v| (0.0..=100.0).contains(v)));

        let mut shuffled = records.clone();
        shuffled.reverse();
        let mut rev_images = images.clone();
        rev_images.reverse();
        prop_assert_eq!(aggregate("m", &images, &records, &[], &[]), aggregate("m", &rev_images, &shuffled, &[], &[]));
    }
}

#[test]
fn duplicate_model_adds_a_coincident_point() {
    let base = vec![
        vec![0.9, 0.4, 0.1],
        vec![0.5, 0.8, 0.3],
        vec![0.2, 0.3, 0.7],
    ];
    // model 3 duplicates model 0 in both roles
    let mut dup: Vec<Vec<f64>> = base.iter().map(|r| vec![r[0], r[1], r[2], r[0]]).collect();
    dup.push(dup[0].clone());
    let matrix = |ins: Vec<Vec<f64>>| CrossTestMatrix {
        models: (0..ins.len()).map(|i| format!("m{i}")).collect(),
        del: ins.clone(),
        ins,
        dataset_id: "d".into(),
        map_method: "m".into(),
    };
    let e = kernel_pca_embed(&matrix(dup), Channel::Ins, Kernel::default(), 2).unwrap();
    assert!(e.distance(0, 3) < 1e-6);
}
