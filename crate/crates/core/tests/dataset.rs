use approx::assert_abs_diff_eq;
use ensemble_ids::dataset::*;
use ensemble_ids::synthetic::{fixture_csv, generate_fixture, FixtureSpec};
use ensemble_ids::Error;
use ndarray::{array, Array2};
use std::collections::BTreeMap;

fn parse(text: &str, opts: &CsvOptions) -> Result<RawTable, Error> {
    read_csv(text.as_bytes(), opts)
}

#[test]
fn header_and_two_rows() {
    let t = parse("a,b\n1,2\n3,4\n", &CsvOptions::default()).unwrap();
    assert_eq!(t.n_rows(), 2);
    assert_eq!(t.header, vec!["a", "b"]);
}

#[test]
fn malformed_rows_follow_policy() {
    let text = "a,b\n1,2\n3\n5,6\n";
    let drop = CsvOptions {
        malformed: MalformedPolicy::Drop,
        ..CsvOptions::default()
    };
    let t = parse(text, &drop).unwrap();
    assert_eq!((t.n_rows(), t.dropped_rows), (2, 1));
    // one bad row in three exceeds the default 0.1% tolerance
    assert!(matches!(parse(text, &CsvOptions::default()), Err(Error::TooManyMalformedRows { .. })));
    let reject = CsvOptions {
        malformed: MalformedPolicy::Reject,
        ..CsvOptions::default()
    };
    assert!(parse(text, &reject).is_err());
}

#[test]
fn empty_and_duplicate_inputs() {
    assert!(matches!(parse("", &CsvOptions::default()), Err(Error::EmptyInput)));
    assert!(matches!(parse("a,b\n", &CsvOptions::default()), Err(Error::EmptyInput)));
    assert!(parse("a,a\n1,2\n", &CsvOptions::default()).is_err());
    assert!(load_csv("/nonexistent/flows.csv", &CsvOptions::default()).is_err());
}

#[test]
fn headerless_nsl_records() {
    let line = "0,tcp,http,SF,215,45076,0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,1,1,0.00,0.00,0.00,0.00,1.00,0.00,0.00,0,0,0.00,0.00,0.00,0.00,0.00,0.00,0.00,0.00,normal,21";
    let row2 = line.replace("tcp", "icmp").replace(",normal,", ",neptune,").replace("http", "ftp");
    let text = format!("{line}\n{row2}\n");
    let flavor = DatasetFlavor::NslKdd;
    let opts = CsvOptions {
        has_header: flavor.has_header(),
        columns: flavor.schema(43),
        ..CsvOptions::default()
    };
    let mut t = parse(&text, &opts).unwrap();
    t.drop_columns(&flavor.drop_columns());
    let labels = binarize_labels(&t, "label", flavor.normal_token()).unwrap();
    assert_eq!(labels, vec![0, 1]);
    let exclude = vec!["label".to_string()];
    let cats = flavor.categorical_columns(&t, &exclude);
    let map = build_encoding_map(&t, &cats, &flavor.fixed_maps()).unwrap();
    let x: FeatureMatrix<f64> = encode_categoricals(&t, &map, &exclude, UnseenPolicy::Reject).unwrap();
    assert_eq!(x.n_cols(), 41);
    assert_eq!(x.data[[0, 1]], 2.0);
    assert_eq!(x.data[[1, 1]], 1.0);
    assert_eq!(x.data[[0, 3]], 10.0);
    assert_eq!(x.data[[0, 2]], 2.0, "ftp < http");
    assert_eq!(x.data[[0, 4]], 215.0);
}

#[test]
fn fixed_maps_match_tables() {
    let p = protocol_map();
    assert_eq!((p["icmp"], p["tcp"], p["udp"]), (1, 2, 3));
    let f = flag_map();
    let order = ["OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH"];
    for (i, k) in order.iter().enumerate() {
        assert_eq!(f[*k], i as u32 + 1);
    }
}

#[test]
fn unseen_categories() {
    let train = parse("svc,v\nhttp,1\nftp,2\n", &CsvOptions::default()).unwrap();
    let map = build_encoding_map(&train, &["svc".to_string()], &BTreeMap::new()).unwrap();
    assert_eq!(map.code("svc", "ftp"), Some(1));
    assert_eq!(map.decode("svc", 2), Some("http"));
    let test = parse("svc,v\nnewsvc,1\n", &CsvOptions::default()).unwrap();
    match encode_categoricals::<f64>(&test, &map, &[], UnseenPolicy::Reject) {
        Err(Error::UnseenCategory { column, value }) => assert_eq!((column.as_str(), value.as_str()), ("svc", "newsvc")),
        other => panic!("{other:?}"),
    }
    let x = encode_categoricals::<f64>(&test, &map, &[], UnseenPolicy::ReserveZero).unwrap();
    assert_eq!(x.data[[0, 0]], 0.0);
    assert_eq!(EncodingMap::from_json(&map.to_json().unwrap()).unwrap(), map);
}

#[test]
fn missing_label_column() {
    let t = parse("a\n1\n", &CsvOptions::default()).unwrap();
    assert!(binarize_labels(&t, "label", "normal").is_err());
}

#[test]
fn scaler_moments() {
    let x = FeatureMatrix::new(
        vec!["a".into(), "b".into(), "c".into()],
        array![[2.0, 5.0, 1.0], [4.0, 5.0, -3.0], [6.0, 5.0, 10.0]],
        None,
    )
    .unwrap();
    let p = fit_scaler(&x).unwrap();
    assert_abs_diff_eq!(p.mean[0], 4.0);
    assert_abs_diff_eq!(p.stddev[0], (8.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    let s = apply_scaler(&x, &p).unwrap();
    assert!(s.column(1).iter().all(|&v| v == 0.0));
    for j in [0, 2] {
        let col = s.column(j);
        let mean = col.sum() / 3.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }
    let narrow = FeatureMatrix::new(vec!["a".into()], Array2::zeros((2, 1)), None).unwrap();
    assert!(apply_scaler(&narrow, &p).is_err());
}

#[test]
fn matrix_csv_round_trip() {
    let (mut t, truth) = generate_fixture(&FixtureSpec::default()).unwrap();
    t.drop_columns(&["label".to_string()]);
    let cats = infer_categorical_columns(&t, &[]);
    assert_eq!(cats, vec!["proto"]);
    let map = build_encoding_map(&t, &cats, &BTreeMap::new()).unwrap();
    let x: FeatureMatrix<f64> = encode_categoricals(&t, &map, &[], UnseenPolicy::Reject).unwrap();
    let x = x.with_labels(truth).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    x.save_csv(&path).unwrap();
    let back = FeatureMatrix::<f64>::load_csv(&path).unwrap();
    assert_eq!(back, x);
    let again = dir.path().join("m2.csv");
    back.save_csv(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn fixture_text_is_stable() {
    let a = fixture_csv(&FixtureSpec::default()).unwrap();
    assert_eq!(a, fixture_csv(&FixtureSpec::default()).unwrap());
    assert_eq!(a.lines().count(), 1001);
}

#[test]
fn non_binary_labels_rejected() {
    let x = FeatureMatrix::new(vec!["a".into()], Array2::<f64>::zeros((2, 1)), None).unwrap();
    assert!(x.with_labels(vec![0, 2]).is_err());
}
