mod oracles;

use approx::assert_abs_diff_eq;
use ensemble_ids::metrics::*;
use oracles::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn printed_confusion_matrices_reproduce() {
    for m in &PRINTED {
        let (tp, fn_, fp, tn) = m.counts;
        let r = classification_report::<f64>(&ConfusionMatrix::new(tp, fn_, fp, tn)).unwrap();
        assert_eq!(truncate(r.precision, 3), m.precision, "{} precision {}", m.name, r.precision);
        assert_eq!(truncate(r.recall, 3), m.recall, "{} recall {}", m.name, r.recall);
        if let Some((far, places)) = m.far {
            assert_eq!(truncate(r.far, places), far, "{} far {}", m.name, r.far);
        }
        if let Some(acc) = m.accuracy {
            assert_eq!(truncate(r.accuracy, 3), acc, "{} accuracy {}", m.name, r.accuracy);
        }
    }
}

#[test]
fn printed_homogeneity_and_completeness() {
    // rebuild label vectors from the clustering confusion matrices
    let expand = |(tp, fn_, fp, tn): (u64, u64, u64, u64)| {
        let mut t = vec![];
        let mut p = vec![];
        for (count, truth, pred) in [(tp, 1, 1), (fn_, 1, 0), (fp, 0, 1), (tn, 0, 0)] {
            t.extend(std::iter::repeat_n(truth, count as usize));
            p.extend(std::iter::repeat_n(pred, count as usize));
        }
        (t, p)
    };
    for (idx, h, c) in [(1, 0.398, 0.411), (2, 0.543, 0.58)] {
        let (t, p) = expand(PRINTED[idx].counts);
        let r = clustering_report::<f64>(&t, &p).unwrap();
        // these columns are rounded rather than truncated
        assert_abs_diff_eq!(r.homogeneity, h, epsilon = 5e-4);
        assert_abs_diff_eq!(r.completeness, c, epsilon = 5e-4);
    }
}

#[test]
fn ari_matches_pair_enumeration() {
    for seed in 0..50 {
        let mut r = rng(seed);
        let n = r.random_range(2..40);
        let ka = r.random_range(1..4);
        let kb = r.random_range(1..4);
        let a: Vec<u8> = (0..n).map(|_| r.random_range(0..ka)).collect();
        let b: Vec<u8> = (0..n).map(|_| r.random_range(0..kb)).collect();
        let got = clustering_report::<f64>(&a, &b).unwrap().ari;
        assert_abs_diff_eq!(got, ari_by_pairs(&a, &b), epsilon = 1e-12);
    }
}

#[test]
fn ami_matches_reference_values() {
    // values from an established implementation (arithmetic-mean normalization)
    let cases: [(&[u8], &[u8], f64, f64, f64, f64); 4] = [
        (&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2], 0.2987924581708901, 0.24242424242424243, 0.6666666666666669, 0.420619835714305),
        (&[0, 0, 1, 1, 0, 1, 1, 0, 1, 1], &[1, 1, 0, 0, 1, 0, 1, 0, 1, 1], -0.049660068470766594, -0.07142857142857142, 0.047828741169985416, 0.047828741169985416),
        (&[0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2], &[0, 0, 1, 1, 2, 2, 0, 0, 1, 1, 2, 2], 0.19887706834711857, 0.08333333333333333, 0.3690702464285427, 0.3690702464285427),
        (
            &[0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0],
            &[0, 0, 0, 1, 1, 1, 1, 1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 1],
            0.36706895158923214,
            0.4629198536747589,
            0.38813974530783957,
            0.39686388362054575,
        ),
    ];
    for (a, b, ami, ari, h, c) in cases {
        let r = clustering_report::<f64>(a, b).unwrap();
        assert_abs_diff_eq!(r.ami, ami, epsilon = 1e-10);
        assert_abs_diff_eq!(r.ari, ari, epsilon = 1e-12);
        assert_abs_diff_eq!(r.homogeneity, h, epsilon = 1e-12);
        assert_abs_diff_eq!(r.completeness, c, epsilon = 1e-12);
    }
}

#[test]
fn perfect_and_single_cluster_cases() {
    let r = clustering_report::<f64>(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap();
    assert_eq!((r.homogeneity, r.completeness, r.v_measure), (1.0, 1.0, 1.0));
    assert_abs_diff_eq!(r.ari, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.ami, 1.0, epsilon = 1e-12);
    let r = clustering_report::<f64>(&[0, 0, 0], &[1, 1, 1]).unwrap();
    assert_eq!(r.ami, 1.0);
}

#[test]
fn roc_auc_matches_mann_whitney() {
    for seed in 0..40 {
        let mut r = rng(seed);
        let n = r.random_range(4..=50);
        let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // coarse scores force ties
        let scores: Vec<f64> = (0..n).map(|i| (r.random_range(0..6) as f64 + labels[i] as f64) / 7.0).collect();
        let roc = roc_curve(&labels, &scores).unwrap();
        assert_abs_diff_eq!(roc.auc, mann_whitney_auc(&labels, &scores), epsilon = 1e-12);
    }
}

#[test]
fn shuffled_scores_give_chance_auc() {
    let mut r = rng(77);
    let labels: Vec<u8> = (0..10_000).map(|_| r.random_range(0..2)).collect();
    let mut scores: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    scores.shuffle(&mut r);
    let auc = roc_curve(&labels, &scores).unwrap().auc;
    assert!((auc - 0.5).abs() <= 0.05, "{auc}");
}

#[test]
fn separating_scores_give_unit_auc() {
    let labels = [0, 0, 1, 1, 0, 1];
    let scores = [0.1, 0.2, 0.9, 0.8, 0.3, 0.7];
    assert_eq!(roc_curve(&labels, &scores).unwrap().auc, 1.0);
    assert_abs_diff_eq!(pr_curve(&labels, &scores).unwrap().auc, 1.0, epsilon = 1e-12);
}

#[test]
fn degenerate_denominators_are_flagged() {
    let r = classification_report::<f64>(&ConfusionMatrix::new(0, 0, 0, 5)).unwrap();
    assert_eq!(r.precision, 0.0);
    assert_eq!(r.recall, 0.0);
    assert!(r.degenerate.iter().any(|m| m == "precision"));
    assert!(r.degenerate.iter().any(|m| m == "recall"));
    assert!(r.accuracy.is_finite() && r.mcc.is_finite());
}

proptest! {
    #[test]
    fn derived_metric_identities(tp in 0u64..1000, fn_ in 0u64..1000, fp in 0u64..1000, tn in 0u64..1000) {
        prop_assume!(tp + fn_ + fp + tn > 0);
        let cm = ConfusionMatrix::new(tp, fn_, fp, tn);
        let r = classification_report::<f64>(&cm).unwrap();
        if r.precision > 0.0 && r.recall > 0.0 {
            let f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
            prop_assert!((r.f1 - f1).abs() < 1e-12);
        }
        let s = classification_report::<f64>(&cm.swapped()).unwrap();
        prop_assert!((r.mcc - s.mcc).abs() < 1e-12);
        for v in [r.accuracy, r.precision, r.recall, r.f1, r.far, r.specificity] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn partition_scores_ignore_relabeling(a in proptest::collection::vec(0u8..2, 2..30), seed in 0u64..1000) {
        let mut r = rng(seed);
        let b: Vec<u8> = a.iter().map(|_| r.random_range(0..2)).collect();
        let flip = |v: &[u8]| v.iter().map(|&x| 1 - x).collect::<Vec<u8>>();
        let base = clustering_report::<f64>(&a, &b).unwrap();
        for (x, y) in [(flip(&a), b.clone()), (a.clone(), flip(&b))] {
            let o = clustering_report::<f64>(&x, &y).unwrap();
            prop_assert!((o.ari - base.ari).abs() < 1e-12);
            prop_assert!((o.ami - base.ami).abs() < 1e-9);
        }
    }
}
