//! Frozen values from independent reference computations.

use exid_fingerprint::classify::bdt::{BaggedTrees, Node, Tree};
use exid_fingerprint::classify::{kfold_cv, stratified_folds, train, Hyperparams, Standardizer, TrainingSet};
use exid_fingerprint::features::{extract_with, FEATURE_NAMES};
use exid_fingerprint::frame::{crc15, BitString};
use exid_fingerprint::seed::derive_seed;
use exid_fingerprint::waveform::Waveform;

// numpy 2.2: np.fft.rfft magnitudes, moments with ddof=1 sigma.
const MIXTURE: [f64; 17] = [
    0.049218749999999985,
    0.7901092457311315,
    0.6714324794289634,
    0.009260151528202903,
    -1.0640009072057721,
    0.7854558204322596,
    -1.3814673945383011,
    1.5158423945383015,
    2708696.826697279,
    3.565200880979145,
    20.283785147534072,
    3471385.05634682,
    63.48221334323682,
    1.9400861532843738,
    5468750.0,
    0.08231632427747387,
    109.10380961618242,
];

const STEPS: [f64; 17] = [
    1.0011612184842462,
    1.0053351199901162,
    1.0002735557047437,
    2.8661222957393484e-06,
    -2.0197256314713323,
    1.4152439725529822,
    -0.00980096233152471,
    2.0099999756828253,
    6332529.163327937,
    1.8678508369654565,
    2.484233821795323,
    3939277.06002564,
    232.06804773683172,
    1.3307565098513163,
    19000000.0,
    0.03860454469484628,
    792.5513619619286,
];

fn waveform(samples: Vec<f64>) -> Waveform {
    Waveform {
        samples,
        sample_rate: 50e6,
        bit_rate: 500e3,
        source_label: None,
        pattern: BitString::zeros(1),
    }
}

fn check(name: &str, samples: Vec<f64>, expected: &[f64; 17]) {
    let got = extract_with(&waveform(samples), 0.95).unwrap().to_array();
    for i in 0..17 {
        let scale = expected[i].abs().max(1e-6);
        let err = (got[i] - expected[i]).abs() / scale;
        assert!(err < 1e-9, "{name} {}: {} vs {}", FEATURE_NAMES[i], got[i], expected[i]);
    }
}

#[test]
fn two_tone_with_ramp_matches_numpy() {
    let x = (0..64)
        .map(|k| {
            let k = k as f64;
            (2.0 * std::f64::consts::PI * 3.0 * k / 64.0).sin()
                + 0.5 * (2.0 * std::f64::consts::PI * 7.0 * k / 64.0).cos()
                + 0.1 * k / 64.0
        })
        .collect();
    check("mixture", x, &MIXTURE);
}

#[test]
fn square_wave_with_chirp_matches_numpy() {
    let x = (0..100)
        .map(|j| {
            let level = if (j / 25) % 2 == 0 { 2.0 } else { 0.0 };
            let j = j as f64;
            level + 0.01 * (0.37 * j * j).sin()
        })
        .collect();
    check("steps", x, &STEPS);
}

#[test]
fn crc15_reference_vectors() {
    // Bitwise long division by x^15+x^14+x^10+x^8+x^7+x^4+x^3+1, worked by hand.
    assert_eq!(crc15(&BitString::zeros(0)), 0);
    assert_eq!(crc15(&BitString::zeros(16)), 0);
    assert_eq!(crc15(&"1".parse().unwrap()), 0x4599);
    assert_eq!(crc15(&"10".parse().unwrap()), 0x4599 << 1 & 0x7fff ^ 0x4599);
}

fn stump(feature: usize, threshold: f64, left: usize, right: usize) -> Tree {
    Tree {
        nodes: vec![
            Node::Split {
                feature,
                threshold,
                left: 1,
                right: 2,
            },
            Node::Leaf { class: left },
            Node::Leaf { class: right },
        ],
    }
}

#[test]
fn five_tree_vote_by_hand() {
    let forest = BaggedTrees {
        classes: 3,
        trees: vec![
            stump(0, 0.5, 0, 1),
            stump(0, 1.5, 0, 2),
            stump(1, 0.0, 1, 2),
            stump(1, 2.0, 1, 0),
            stump(0, -1.0, 2, 1),
        ],
    };
    // x = (1, 1): votes 1, 0, 2, 1, 1.
    assert_eq!(forest.vote_fractions(&[1.0, 1.0]), vec![0.2, 0.6, 0.2]);
    // x = (2, 3): votes 1, 2, 2, 0, 1.
    assert_eq!(forest.vote_fractions(&[2.0, 3.0]), vec![0.2, 0.4, 0.4]);
}

fn blobs(offset: f64) -> TrainingSet {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..3 {
        for i in 0..30 {
            let j = (i as f64 * 0.61).sin() * 0.2;
            let mut row = vec![offset + j, offset - j, offset + j * 0.5];
            row[c] += 10.0;
            rows.push(row);
            labels.push(c);
        }
    }
    TrainingSet::new(rows, labels, vec!["a".into(), "b".into(), "c".into()]).unwrap()
}

#[test]
fn separable_classes_reach_full_success() {
    let data = blobs(0.0);
    for hp in [
        Hyperparams::linear_svm(),
        Hyperparams::rbf_svm(),
        Hyperparams::neural_net(10),
        Hyperparams::bagged_trees(10),
    ] {
        let r = kfold_cv(&data, &hp, 5, 3).unwrap();
        assert_eq!(r.overall_success, 100.0, "{}", hp.label());
    }
}

#[test]
fn linear_svm_ignores_common_shift() {
    let a = train(&blobs(0.0), &Hyperparams::linear_svm(), 9).unwrap();
    let b = train(&blobs(1e3), &Hyperparams::linear_svm(), 9).unwrap();
    for row in &blobs(0.0).rows {
        let shifted: Vec<f64> = row.iter().map(|v| v + 1e3).collect();
        let sa = a.predict_scores(row).unwrap();
        let sb = b.predict_scores(&shifted).unwrap();
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn standardizer_sees_training_folds_only() {
    let data = blobs(0.0);
    let train_idx: Vec<usize> = (0..data.len()).filter(|i| i % 5 != 0).collect();
    let sub = data.subset(&train_idx);
    let model = train(&sub, &Hyperparams::linear_svm(), 1).unwrap();
    assert_eq!(model.normalizer, Standardizer::fit(&sub.rows));
    assert_ne!(model.normalizer, Standardizer::fit(&data.rows));
}

#[test]
fn cross_validation_matches_manual_fold_loop() {
    // Shift one class far away so a leaked test row would move the scaling.
    let mut data = blobs(0.0);
    for (row, &l) in data.rows.iter_mut().zip(&data.labels) {
        if l == 2 {
            row[0] -= 40.0;
        }
    }
    let hp = Hyperparams::linear_svm();
    let report = kfold_cv(&data, &hp, 3, 11).unwrap();
    let folds = stratified_folds(&data.labels, 3, 3, 11);
    let mut counts = vec![vec![0usize; 3]; 3];
    for f in 0..3 {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
        let model = train(&data.subset(&train_idx), &hp, derive_seed(11, 1000 + f as u64)).unwrap();
        for i in (0..data.len()).filter(|&i| folds[i] == f) {
            counts[data.labels[i]][model.predict(&data.rows[i]).unwrap()] += 1;
        }
    }
    assert_eq!(report.counts, counts);
}
