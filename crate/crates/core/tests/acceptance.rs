//! Full acceptance run at the default configuration. Prints one line per
//! criterion and fails if any criterion fails.

use std::process::ExitCode;

use exid_fingerprint::acceptance::{
    classification, determinism, dft_oracle, feature_oracle, frame_properties, monitor_end_to_end, novelty, trend,
    Outcome, Study, CLASSIFICATION_BUDGET, DFT_TOLERANCE, FAST_BUDGET, FEATURE_TOLERANCE, MAX_EER, MIN_SUCCESS,
    PARSEVAL_TOLERANCE,
};
use exid_fingerprint::config::ExperimentConfig;

fn main() -> ExitCode {
    assert_eq!(FEATURE_TOLERANCE, 1e-9);
    assert_eq!(DFT_TOLERANCE, 1e-9);
    assert_eq!(PARSEVAL_TOLERANCE, 1e-6);
    assert_eq!(MIN_SUCCESS, 90.0);
    assert_eq!(MAX_EER, 0.05);
    assert_eq!(FAST_BUDGET.as_secs(), 30);
    assert_eq!(CLASSIFICATION_BUDGET.as_secs(), 300);

    let cfg = ExperimentConfig::default();
    assert_eq!((cfg.profiles, cfg.signals_per_profile, cfg.folds), (12, 200, 10));
    assert_eq!(cfg.alien_profiles * cfg.alien_signals, 1000);
    assert_eq!(cfg.escalation_k, 3);

    let tmp = tempfile::tempdir().expect("temp dir");
    let mut outcomes: Vec<Outcome> = Vec::new();
    let mut report = |o: Outcome| {
        println!("{o}");
        outcomes.push(o);
    };
    let mut study = Study::new();
    report(feature_oracle(cfg.seed).expect("criterion 1"));
    report(dft_oracle(cfg.seed).expect("criterion 2"));
    report(frame_properties(cfg.seed).expect("criterion 3"));
    report(classification(&cfg, &mut study).expect("criterion 4"));
    let (outcome, run) = novelty(&cfg, &mut study).expect("criterion 5");
    report(outcome);
    report(trend(&cfg, &mut study).expect("criterion 6"));
    report(monitor_end_to_end(&cfg, &run).expect("criterion 7"));
    let dir = tmp.path();
    report(determinism(&cfg, &dir.join("first"), &dir.join("second")).expect("criterion 8"));

    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.number).collect();
    println!("{}/{} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
