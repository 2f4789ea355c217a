mod common;

use asana_core::dataset::{
    build_hierarchy, HierarchyTable, LabeledSample, Level, L1_CLASSES, L2_CLASSES,
};
use asana_core::evalreport::*;
use asana_core::seed;
use asana_core::training::{EpochRecord, RunHistory};
use common::metrics as oracle;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

fn to_array(rows: &oracle::Rows) -> Array2<f64> {
    let c = rows[0].len();
    Array2::from_shape_vec((rows.len(), c), rows.iter().flatten().copied().collect()).unwrap()
}

#[test]
fn topk_examples() {
    let one = array![[0.1, 2.0, 0.3]];
    assert_eq!(topk_accuracy(one.view(), &[1], 1).unwrap(), 1.0);
    // true-label ranks 1, 2, 3 and 6
    let mut logits = Array2::<f64>::zeros((4, 82));
    for i in 0..4 {
        for j in 0..82 {
            logits[[i, j]] = -(j as f64);
        }
    }
    let labels = [0, 1, 2, 5];
    assert_eq!(topk_accuracy(logits.view(), &labels, 5).unwrap(), 0.75);
    assert_eq!(topk_accuracy(logits.view(), &labels, 82).unwrap(), 1.0);
}

#[test]
fn topk_ties_admit_lower_index_first() {
    let logits = array![[1.0, 1.0, 1.0, 0.0]];
    assert_eq!(topk_accuracy(logits.view(), &[1], 1).unwrap(), 0.0);
    assert_eq!(topk_accuracy(logits.view(), &[0], 1).unwrap(), 1.0);
    assert_eq!(topk_accuracy(logits.view(), &[2], 2).unwrap(), 0.0);
    assert_eq!(topk_accuracy(logits.view(), &[2], 3).unwrap(), 1.0);
}

#[test]
fn topk_errors() {
    let logits = Array2::<f64>::zeros((1, 3));
    assert!(matches!(
        topk_accuracy(logits.view(), &[3], 1),
        Err(EvalError::Label { label: 3, .. })
    ));
    assert!(matches!(
        topk_accuracy(logits.view(), &[0], 0),
        Err(EvalError::K { .. })
    ));
    assert!(matches!(
        topk_accuracy(logits.view(), &[0], 4),
        Err(EvalError::K { .. })
    ));
}

#[test]
fn confusion_examples() {
    let m = confusion_matrix(&[0, 1, 1, 2], &[0, 1, 1, 2], 3).unwrap();
    assert_eq!(m, array![[1, 0, 0], [0, 2, 0], [0, 0, 1]]);
    let m = confusion_matrix(&[7], &[3], 82).unwrap();
    assert_eq!(m[[3, 7]], 1);
    assert_eq!(m.sum(), 1);
    assert!(matches!(
        confusion_matrix(&[82], &[0], 82),
        Err(EvalError::Label { label: 82, .. })
    ));
}

#[test]
fn prf_examples() {
    let s = macro_prf(&array![[5, 0], [0, 5]]).unwrap();
    assert_eq!(
        (s.macro_precision, s.macro_recall, s.macro_f1),
        (1.0, 1.0, 1.0)
    );
    let s = macro_prf(&array![[3, 1], [2, 4]]).unwrap();
    assert!((s.per_class[0].precision - 0.6).abs() < 1e-15);
    assert!((s.per_class[1].precision - 0.8).abs() < 1e-15);
    assert!((s.per_class[0].recall - 0.75).abs() < 1e-15);
    assert!((s.per_class[1].recall - 2.0 / 3.0).abs() < 1e-15);
    // f1 = 2/3 and 8/11; their mean is 23/33
    assert!((s.macro_f1 - 23.0 / 33.0).abs() < 1e-15);
    assert!((s.macro_f1 - 0.69697).abs() < 1e-5);
}

#[test]
fn prf_zero_support_is_excluded_and_reported() {
    let s = macro_prf(&array![[2, 0, 1], [0, 0, 0], [0, 1, 3]]).unwrap();
    assert_eq!(s.excluded, vec![1]);
    assert!(s.per_class[1].undefined);
    let p = (1.0 + 0.75) / 2.0;
    assert!((s.macro_precision - p).abs() < 1e-15);
    assert!(matches!(
        macro_prf(&Array2::zeros((3, 3))),
        Err(EvalError::Empty)
    ));
}

fn sample(id: usize, l1: usize, l2: usize, l3: usize) -> LabeledSample {
    LabeledSample {
        id,
        image_path: format!("c{l3}/{id}.jpg"),
        l1,
        l2,
        l3,
    }
}

/// Random tree over `c` leaves: parent arrays (l3 -> l2, l3 -> l1).
fn random_tree(c: usize, key: u64) -> (HierarchyTable, Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(77, &[key]);
    let l2_to_l1: Vec<usize> = (0..L2_CLASSES)
        .map(|_| rng.random_range(0..L1_CLASSES))
        .collect();
    let l3_to_l2: Vec<usize> = (0..c).map(|_| rng.random_range(0..L2_CLASSES)).collect();
    let samples: Vec<_> = (0..c)
        .map(|l3| sample(l3, l2_to_l1[l3_to_l2[l3]], l3_to_l2[l3], l3))
        .collect();
    let l3_to_l1 = l3_to_l2.iter().map(|&p| l2_to_l1[p]).collect();
    (build_hierarchy(&samples).unwrap(), l3_to_l2, l3_to_l1)
}

#[test]
fn rollup_examples() {
    let samples = [sample(0, 0, 0, 0), sample(1, 0, 0, 1), sample(2, 1, 1, 2)];
    let h = build_hierarchy(&samples).unwrap();
    // perfect leaf predictions
    let perfect = array![[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 3.0]];
    for level in [Level::L1, Level::L2] {
        let r = rollup_level(perfect.view(), &[0, 1, 2], &h, level).unwrap();
        assert_eq!((r.top1, r.prf.macro_f1), (1.0, 1.0));
    }
    // leaf 1 predicted as its sibling 0: wrong at l3, right at l2
    let sibling = array![[0.0, -1.0, -2.0]];
    assert_eq!(topk_accuracy(sibling.view(), &[1], 1).unwrap(), 0.0);
    assert_eq!(
        rollup_level(sibling.view(), &[1], &h, Level::L2)
            .unwrap()
            .top1,
        1.0
    );
    // label outside the hierarchy
    let wide = Array2::<f64>::zeros((1, 5));
    assert!(matches!(
        rollup_level(wide.view(), &[4], &h, Level::L2),
        Err(EvalError::Hierarchy(_))
    ));
}

fn random_case(key: u64) -> (oracle::Rows, Vec<usize>, usize) {
    let mut rng = seed::rng(13, &[key]);
    let c = rng.random_range(2..=82);
    let n = rng.random_range(1..=200);
    // coarse scores make exact ties common
    let coarse = rng.random_bool(0.5);
    let logits: oracle::Rows = (0..n)
        .map(|_| {
            (0..c)
                .map(|_| {
                    if coarse {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random_range(-3.0..3.0)
                    }
                })
                .collect()
        })
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    (logits, labels, c)
}

#[test]
fn metrics_agree_with_brute_force_on_random_instances() {
    for key in 0..100 {
        let (rows, labels, c) = random_case(key);
        let logits = to_array(&rows);
        let mut last = 0.0;
        for k in 1..=c {
            let got = topk_accuracy(logits.view(), &labels, k).unwrap();
            assert_eq!(got, oracle::topk(&rows, &labels, k), "case {key}, k {k}");
            assert!(got >= last);
            last = got;
        }
        assert_eq!(last, 1.0);
        let pred: Vec<usize> = rows.iter().map(|r| oracle::argmax(r)).collect();
        assert_eq!(predictions(logits.view()), pred);
        let m = confusion_matrix(&pred, &labels, c).unwrap();
        let t = oracle::tally(&pred, &labels, c);
        assert!(
            m.rows().into_iter().zip(&t).all(|(a, b)| a.to_vec() == *b),
            "case {key}"
        );
        let s = macro_prf(&m).unwrap();
        let (p, r, f, excluded) = oracle::prf(&t);
        assert!(
            (s.macro_precision - p).abs() < 1e-12
                && (s.macro_recall - r).abs() < 1e-12
                && (s.macro_f1 - f).abs() < 1e-12
        );
        assert_eq!(s.excluded, excluded);
        let trace: u64 = (0..c).map(|i| m[[i, i]]).sum();
        assert!(
            (trace as f64 / labels.len() as f64
                - topk_accuracy(logits.view(), &labels, 1).unwrap())
            .abs()
                < 1e-15
        );
    }
}

#[test]
fn rollups_agree_with_remap_oracle() {
    for key in 0..100 {
        let (rows, labels, c) = random_case(key);
        let logits = to_array(&rows);
        let (h, to_l2, to_l1) = random_tree(c, key);
        let leaf_top1 = topk_accuracy(logits.view(), &labels, 1).unwrap();
        for (level, parent, classes) in [
            (Level::L2, &to_l2, L2_CLASSES),
            (Level::L1, &to_l1, L1_CLASSES),
        ] {
            let r = rollup_level(logits.view(), &labels, &h, level).unwrap();
            let (crow, clab) = oracle::remap(&rows, &labels, parent, classes);
            assert_eq!(
                r.top1,
                oracle::topk(&crow, &clab, 1),
                "case {key} {level:?}"
            );
            assert_eq!(r.top5, oracle::topk(&crow, &clab, 5));
            let pred: Vec<usize> = crow.iter().map(|row| oracle::argmax(row)).collect();
            let t = oracle::tally(&pred, &clab, classes);
            assert_eq!(r.confusion, t);
            let (p, rc, f, _) = oracle::prf(&t);
            assert!(
                (r.prf.macro_precision - p).abs() < 1e-12
                    && (r.prf.macro_recall - rc).abs() < 1e-12
            );
            assert!((r.prf.macro_f1 - f).abs() < 1e-12);
            if !rows.iter().flatten().any(|v| v.fract() == 0.0) {
                assert!(r.top1 >= leaf_top1);
            }
        }
    }
}

proptest! {
    #[test]
    fn rollup_never_lowers_top1(seed_value in any::<u64>(), n in 1usize..60, c in 2usize..40) {
        let mut rng = seed::rng(seed_value, &[]);
        let logits = Array2::from_shape_simple_fn((n, c), || rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let (h, _, _) = random_tree(c, seed_value);
        let leaf = topk_accuracy(logits.view(), &labels, 1).unwrap();
        let l2 = rollup_level(logits.view(), &labels, &h, Level::L2).unwrap().top1;
        let l1 = rollup_level(logits.view(), &labels, &h, Level::L1).unwrap().top1;
        prop_assert!(leaf <= l2 && l2 <= l1);
    }

    #[test]
    fn report_invariants(seed_value in any::<u64>(), n in 1usize..100) {
        let mut rng = seed::rng(seed_value, &[1]);
        let logits = Array2::from_shape_simple_fn((n, 82), || rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..82)).collect();
        let r = evaluate("m", logits.view(), &labels, None).unwrap();
        prop_assert!(0.0 <= r.top1 && r.top1 <= r.top5 && r.top5 <= 1.0);
        let total: u64 = r.confusion.iter().flatten().sum();
        prop_assert_eq!(total as usize, n);
        for (c, row) in r.confusion.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<u64>(), r.per_class[c].support);
        }
        let counted: Vec<_> = r.per_class.iter().filter(|s| s.support > 0).collect();
        let mean = counted.iter().map(|s| s.f1).sum::<f64>() / counted.len() as f64;
        prop_assert!((mean - r.macro_f1).abs() < 1e-12);
        prop_assert_eq!(r.excluded_classes.len(), 82 - counted.len());
    }
}

// ---- emitted files ----

fn reference_report(model: &str, top1: f64, top5: f64, p: f64, r: f64, f1: f64) -> MetricsReport {
    let base = evaluate(model, array![[1.0, 0.0], [0.0, 1.0]].view(), &[0, 1], None).unwrap();
    MetricsReport {
        top1,
        top5,
        macro_precision: p,
        macro_recall: r,
        macro_f1: f1,
        ..base
    }
}

#[test]
fn densenet_reference_row() {
    let r = reference_report("DenseNet-121", 0.85, 0.96, 0.87, 0.83, 0.83);
    assert_eq!(
        format_row(&TableRow::from(&r)),
        "DenseNet-121, 85, 96, 0.87, 0.83, 0.83"
    );
}

fn history(n: usize) -> RunHistory {
    let mut h = RunHistory::default();
    for e in 0..n {
        h.push(EpochRecord {
            epoch: e,
            lr: 0.01,
            train_loss: 2.0 / (e + 1) as f64,
            train_top1: 0.5 + 0.05 * e as f64,
            val_loss: 2.2 / (e + 1) as f64,
            val_top1: 0.45 + 0.05 * e as f64,
            seconds: 1.0,
        });
    }
    h
}

#[test]
fn emitted_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = seed::rng(4, &[]);
    let logits = Array2::from_shape_simple_fn((30, 82), || rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..30).map(|i| i % 7).collect();
    let samples: Vec<_> = (0..7)
        .map(|l3| sample(l3, (l3 % 3) % 2, l3 % 3, l3))
        .collect();
    // a hierarchy that only knows the leaves present in the labels
    let h = build_hierarchy(&samples).unwrap();
    let report = evaluate("ResNet-50", logits.view(), &labels, Some(&h)).unwrap();
    assert_eq!(report.levels.len(), 2);
    let out = emit_report(&report, &history(4), dir.path()).unwrap();
    assert!(out.notices.is_empty());
    for f in [
        METRICS_FILE,
        CONFUSION_FILE,
        TABLE_FILE,
        ACCURACY_PLOT,
        LOSS_PLOT,
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert_eq!(
        read_metrics(&dir.path().join(METRICS_FILE)).unwrap(),
        report
    );
    let svg = std::fs::read_to_string(dir.path().join(LOSS_PLOT)).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    let csv = std::fs::read_to_string(dir.path().join(CONFUSION_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 83);
    let row3: u64 = csv
        .lines()
        .nth(4)
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse::<u64>().unwrap())
        .sum();
    assert_eq!(row3, report.per_class[3].support);
    let table = std::fs::read_to_string(dir.path().join(TABLE_FILE)).unwrap();
    assert_eq!(table.lines().nth(1), Some(TABLE_HEADER));
    assert!(table.lines().next().unwrap().contains("macro"));
}

#[test]
fn empty_history_omits_curves_with_notice() {
    let dir = tempfile::tempdir().unwrap();
    let report = reference_report("VGG-16", 0.74, 0.92, 0.73, 0.70, 0.69);
    let out = emit_report(&report, &RunHistory::default(), dir.path()).unwrap();
    assert_eq!(out.notices.len(), 1);
    assert!(dir.path().join(METRICS_FILE).is_file());
    assert!(!dir.path().join(ACCURACY_PLOT).exists());
}

#[test]
fn aggregate_finds_records_and_keeps_order() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("run_a");
    let b = dir.path().join("run_b/eval");
    for (d, r) in [
        (
            &a,
            reference_report("ResNet-50", 0.77, 0.94, 0.81, 0.76, 0.76),
        ),
        (&b, reference_report("VGG-16", 0.74, 0.92, 0.73, 0.70, 0.69)),
    ] {
        std::fs::create_dir_all(d).unwrap();
        write_metrics(&r, &d.join(METRICS_FILE)).unwrap();
    }
    let table = aggregate_reports(&[dir.path().join("run_b"), a.clone()]).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(
        lines[2..],
        [
            "VGG-16, 74, 92, 0.73, 0.70, 0.69",
            "ResNet-50, 77, 94, 0.81, 0.76, 0.76"
        ]
    );
    let err = aggregate_reports(&[dir.path().join("missing")]).unwrap_err();
    assert!(err.to_string().contains("missing"));
}
