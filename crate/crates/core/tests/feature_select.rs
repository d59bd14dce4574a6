mod oracles;

use approx::assert_abs_diff_eq;
use ensemble_ids::dataset::FeatureMatrix;
use ensemble_ids::feature_select::*;
use ndarray::{Array1, Array2, Axis};
use oracles::*;
use proptest::prelude::*;
use rand::Rng;

fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

fn no_intercept(tol: f64) -> LassoConfig {
    LassoConfig {
        tol,
        fit_intercept: false,
        ..LassoConfig::default()
    }
}

#[test]
fn orthonormal_design_matches_soft_threshold() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let d = 1 + seed as usize % 10;
        let n = d + 5 + r.random_range(0..20);
        let x = orthonormal_columns(&mut r, n, d);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        for alpha in [0.0, 0.05, 0.3, 1.0, 4.0] {
            let expected = soft_threshold_solution(&x, &y, alpha);
            let fit = lasso_fit(to_array(&x).view(), Array1::from(y.clone()).view(), alpha, &no_intercept(1e-6)).unwrap();
            for (b, e) in fit.coefficients.iter().zip(&expected) {
                assert_abs_diff_eq!(*b, *e, epsilon = 1e-6);
            }
        }
    }
}

#[test]
fn zero_penalty_matches_normal_equations() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let d = 1 + seed as usize % 8;
        let n = 3 * d + 10;
        let x = random_matrix(&mut r, n, d);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let expected = normal_equations(&x, &y);
        let fit = lasso_fit(to_array(&x).view(), Array1::from(y).view(), 0.0, &no_intercept(1e-10)).unwrap();
        assert!(fit.converged);
        for (b, e) in fit.coefficients.iter().zip(&expected) {
            assert_abs_diff_eq!(*b, *e, epsilon = 1e-6);
        }
    }
}

#[test]
fn intercept_matches_augmented_least_squares() {
    let mut r = rng(7);
    let x = random_matrix(&mut r, 40, 3);
    let y: Vec<f64> = x.iter().map(|row| 2.0 + row[0] - 0.5 * row[2] + r.random_range(-0.1..0.1)).collect();
    let augmented: Vec<Vec<f64>> = x.iter().map(|row| [vec![1.0], row.clone()].concat()).collect();
    let expected = normal_equations(&augmented, &y);
    let cfg = LassoConfig {
        tol: 1e-10,
        ..LassoConfig::default()
    };
    let fit = lasso_fit(to_array(&x).view(), Array1::from(y).view(), 0.0, &cfg).unwrap();
    assert_abs_diff_eq!(fit.intercept, expected[0], epsilon = 1e-6);
    for (b, e) in fit.coefficients.iter().zip(&expected[1..]) {
        assert_abs_diff_eq!(*b, *e, epsilon = 1e-6);
    }
}

#[test]
fn cross_validation_matches_refitting_each_fold() {
    let mut r = rng(11);
    let (n, d, k) = (60, 4, 5);
    let x = to_array(&random_matrix(&mut r, n, d));
    let y: Array1<f64> = x.outer_iter().map(|row| row[0] * 1.5 - row[1] + r.random_range(-0.3..0.3)).collect();
    let alphas = [0.0, 0.2, 0.5, 1.0, 3.0];
    let cfg = LassoConfig {
        tol: 1e-12,
        ..LassoConfig::default()
    };
    let cv = cross_validate_alpha(x.view(), y.view(), &alphas, k, 3, &cfg).unwrap();
    let fold = fold_assignment(n, k, 3);
    for (ai, &alpha) in alphas.iter().enumerate() {
        let mut total = 0.0;
        for f in 0..k {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let fit = lasso_fit(x.select(Axis(0), &train).view(), y.select(Axis(0), &train).view(), alpha, &cfg).unwrap();
            let mse: f64 = test
                .iter()
                .map(|&i| {
                    let pred = fit.intercept + x.row(i).iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum::<f64>();
                    (y[i] - pred).powi(2)
                })
                .sum::<f64>()
                / test.len() as f64;
            total += mse;
        }
        assert_abs_diff_eq!(cv.mean_loss[ai], total / k as f64, epsilon = 1e-8);
    }
}

#[test]
fn noiseless_linear_target_picks_small_penalty() {
    let mut r = rng(5);
    let x = to_array(&random_matrix(&mut r, 200, 5));
    let y: Array1<f64> = x.column(2).mapv(|v| 3.0 * v);
    let cv = cross_validate_alpha(x.view(), y.view(), &AlphaGrid::default().values().unwrap(), 10, 0, &LassoConfig::default()).unwrap();
    assert_abs_diff_eq!(cv.best_alpha, 0.1, epsilon = 1e-12);
    let fit = lasso_fit(x.view(), y.view(), cv.best_alpha, &LassoConfig::default()).unwrap();
    assert!(fit.coefficients[2].abs() > 1.0);
}

#[test]
fn default_grid_has_791_points() {
    let v = AlphaGrid::default().values().unwrap();
    assert_eq!(v.len(), 791);
    assert_abs_diff_eq!(*v.last().unwrap(), 8.0, epsilon = 1e-9);
}

#[test]
fn reduction_rate_examples() {
    assert_abs_diff_eq!(feature_reduction_rate(11, 41).unwrap(), 0.7317, epsilon = 5e-5);
    assert_abs_diff_eq!(feature_reduction_rate(9, 43).unwrap(), 0.7907, epsilon = 5e-5);
    assert_eq!(feature_reduction_rate(0, 5).unwrap(), 1.0);
    assert!(feature_reduction_rate(6, 5).is_err());
    assert!(feature_reduction_rate(0, 0).is_err());
}

#[test]
fn selection_requires_labels_and_valid_delta() {
    let x = FeatureMatrix::new(vec!["a".into(), "b".into()], Array2::<f64>::zeros((4, 2)), None).unwrap();
    assert!(matches!(select_features(&x, &SelectionConfig::default()), Err(ensemble_ids::Error::LabelsRequired(_))));
    let x = x.with_labels(vec![0, 1, 0, 1]).unwrap();
    let cfg = SelectionConfig { delta: 1.5, ..SelectionConfig::default() };
    assert!(select_features(&x, &cfg).is_err());
}

#[test]
fn feature_set_round_trips() {
    let mut r = rng(9);
    let rows = random_matrix(&mut r, 50, 4);
    let labels: Vec<u8> = rows.iter().map(|row| u8::from(row[1] > 0.0)).collect();
    let x = FeatureMatrix::new((0..4).map(|i| format!("c{i}")).collect(), to_array(&rows), Some(labels)).unwrap();
    let cfg = SelectionConfig { folds: 5, ..SelectionConfig::default() };
    let fs = select_features(&x, &cfg).unwrap();
    assert!(fs.names().contains(&"c1".to_string()));
    assert_eq!(FeatureSet::from_json(&fs.to_json().unwrap()).unwrap(), fs);
}

proptest! {
    #[test]
    fn correlation_is_bounded_and_sign_flips(
        xs in proptest::collection::vec(-100.0f64..100.0, 8),
        ls in proptest::collection::vec(0u8..2, 8),
    ) {
        let x = Array1::from(xs);
        let l: Array1<f64> = ls.iter().map(|&v| v as f64).collect();
        let c = pearson_cof(x.view(), l.view()).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        let flipped = l.mapv(|v| 1.0 - v);
        let cf = pearson_cof(x.view(), flipped.view()).unwrap();
        prop_assert!((c + cf).abs() < 1e-9);
    }
}
