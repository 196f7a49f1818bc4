//! Automated acceptance checks shared by `exidfp accept` and the
//! `acceptance` integration test. Each check returns an [`Outcome`]; a failed
//! criterion is an outcome, not an error.

pub mod oracle;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::classify::{
    auto_grid, kfold_cv, threshold_sweep, train, write_report, EvaluationReport, FingerprintModel, Hyperparams,
    SweepResult, TrainingSet,
};
use crate::config::{ExperimentConfig, ALL_ONES, ALL_ZEROS};
use crate::dataset::{
    extract_all, fleet_pairing, simulate_aliens, simulate_honest_stream, simulate_intrusion, simulate_known,
    simulate_known_holdout, simulate_masquerade, write_dataset, Fleet, Observation,
};
use crate::error::{Error, Result};
use crate::features::{extract_with, magnitude_spectrum, FEATURE_NAMES};
use crate::frame::{arbitrate, arbitrate_bits, destuff, stuff, BitString, ExtendedId};
use crate::monitor::{Monitor, MonitorLog, Status};
use crate::seed::derive_seed;
use crate::waveform::Waveform;

pub const FEATURE_TOLERANCE: f64 = 1e-9;
pub const DFT_TOLERANCE: f64 = 1e-9;
pub const PARSEVAL_TOLERANCE: f64 = 1e-6;
pub const MIN_SUCCESS: f64 = 90.0;
pub const MAX_EER: f64 = 0.05;
pub const FAST_BUDGET: Duration = Duration::from_secs(30);
pub const CLASSIFICATION_BUDGET: Duration = Duration::from_secs(300);
pub const HONEST_FRAMES: usize = 1000;
pub const INJECTED_FRAMES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub number: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} {}: {} ({}; {:.1}s)",
            self.number,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let offset = rng.random_range(-3.0..3.0);
    let scale = rng.random_range(0.01..2.0);
    match rng.random_range(0..3) {
        0 => (0..len).map(|_| offset + scale * rng.sample::<f64, _>(StandardNormal)).collect(),
        1 => {
            let cycles = rng.random_range(0.5..(len as f64 / 4.0));
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (0..len)
                .map(|k| {
                    let t = k as f64 / len as f64;
                    offset
                        + scale * (std::f64::consts::TAU * cycles * t + phase).sin()
                        + 0.1 * scale * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        }
        _ => {
            let hold = rng.random_range(4..64);
            let mut level = 0.0;
            (0..len)
                .map(|k| {
                    if k % hold == 0 {
                        level = if rng.random_bool(0.5) { scale } else { 0.0 };
                    }
                    offset + level + 0.02 * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        }
    }
}

fn bare_waveform(samples: Vec<f64>, sample_rate: f64) -> Waveform {
    Waveform {
        samples,
        sample_rate,
        bit_rate: sample_rate / 100.0,
        source_label: None,
        pattern: BitString::new(Vec::new()),
    }
}

/// Every feature against [`oracle::features`] on 1000 random signals.
pub fn feature_oracle(seed: u64) -> Result<Outcome> {
    let start = Instant::now();
    let sample_rate = 5e7;
    let worst = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i));
            let len = rng.random_range(64..=4096);
            let x = random_signal(&mut rng, len);
            let expected = oracle::features(&x, sample_rate, 0.95);
            let got = extract_with(&bare_waveform(x, sample_rate), 0.95)?.to_array();
            Ok(got
                .iter()
                .zip(&expected)
                .enumerate()
                .map(|(f, (&g, &e))| (relative_error(g, e), f))
                .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    let elapsed = start.elapsed();
    Ok(Outcome {
        number: 1,
        title: "feature oracle equivalence",
        passed: worst.0 <= FEATURE_TOLERANCE && elapsed < FAST_BUDGET,
        detail: format!(
            "max relative error {:.2e} ({}) over 1000 signals, limit {FEATURE_TOLERANCE:e}",
            worst.0, FEATURE_NAMES[worst.1]
        ),
        elapsed,
    })
}

/// Sum of squared magnitudes over the full, unfolded spectrum.
fn unfolded_energy(half: &[f64], m: usize) -> f64 {
    half.iter()
        .enumerate()
        .map(|(k, v)| {
            let mirrored = k != 0 && !(m % 2 == 0 && k == m / 2);
            v * v * if mirrored { 2.0 } else { 1.0 }
        })
        .sum()
}

/// Spectrum against direct summation, plus Parseval consistency.
pub fn dft_oracle(seed: u64) -> Result<Outcome> {
    let start = Instant::now();
    let mut worst_bin: f64 = 0.0;
    let mut worst_parseval: f64 = 0.0;
    for i in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0xdf7, i));
        let m = rng.random_range(16..=256);
        let x = random_signal(&mut rng, m);
        let expected = oracle::dft_magnitudes(&x);
        let got = magnitude_spectrum(&bare_waveform(x.clone(), 5e7))?.magnitudes;
        for (g, e) in got.iter().zip(&expected) {
            worst_bin = worst_bin.max(relative_error(*g, *e));
        }
        let time_energy: f64 = x.iter().map(|v| v * v).sum::<f64>() * m as f64;
        worst_parseval = worst_parseval.max(relative_error(unfolded_energy(&got, m), time_energy));
    }
    Ok(Outcome {
        number: 2,
        title: "DFT correctness",
        passed: worst_bin <= DFT_TOLERANCE && worst_parseval <= PARSEVAL_TOLERANCE,
        detail: format!(
            "max bin relative error {worst_bin:.2e} (limit {DFT_TOLERANCE:e}), Parseval {worst_parseval:.2e} (limit {PARSEVAL_TOLERANCE:e}) over 200 signals"
        ),
        elapsed: start.elapsed(),
    })
}

/// Stuffing round trips and arbitration against `min`.
pub fn frame_properties(seed: u64) -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x57bf));
    let mut failures = Vec::new();

    for _ in 0..10_000 {
        let len = rng.random_range(0..=128);
        let bias = rng.random_range(0.02..0.98);
        let raw = BitString::new((0..len).map(|_| rng.random_bool(bias)).collect());
        let stuffed = stuff(&raw);
        if stuffed.longest_run() > 5 {
            failures.push(format!("6-run after stuffing {raw}"));
        }
        if destuff(&stuffed).ok().as_ref() != Some(&raw) {
            failures.push(format!("round trip of {raw}"));
        }
    }

    for a in 0..64u64 {
        for b in 0..64u64 {
            if a == b {
                continue;
            }
            let pair = [BitString::from_uint(a, 6), BitString::from_uint(b, 6)];
            let winner = arbitrate_bits(&pair)?;
            if [a, b][winner] != a.min(b) {
                failures.push(format!("6-bit pair {a},{b}"));
            }
        }
    }

    for _ in 0..10_000 {
        let size = rng.random_range(2..=16);
        let mut raw: Vec<u32> = Vec::with_capacity(size);
        while raw.len() < size {
            let id = rng.random_range(0..1u32 << 29);
            if !raw.contains(&id) {
                raw.push(id);
            }
        }
        let ids = raw.iter().map(|&r| ExtendedId::from_raw(r)).collect::<Result<Vec<_>>>()?;
        if arbitrate(&ids)?.raw() != *raw.iter().min().unwrap_or(&0) {
            failures.push(format!("29-bit set {raw:?}"));
        }
    }

    let elapsed = start.elapsed();
    Ok(Outcome {
        number: 3,
        title: "frame properties",
        passed: failures.is_empty() && elapsed < FAST_BUDGET,
        detail: match failures.first() {
            None => "10000 stuffing round trips, 4032 ordered 6-bit pairs, 10000 29-bit sets".into(),
            Some(first) => format!("{} failures, first: {first}", failures.len()),
        },
        elapsed,
    })
}

/// Memoized feature sets and cross-validation results keyed by seed and
/// EXID pattern, so overlapping criteria share work.
#[derive(Default)]
pub struct Study {
    features: HashMap<(u64, String), TrainingSet>,
    success: HashMap<(u64, String, String), f64>,
}

impl Study {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn training_set(&mut self, cfg: &ExperimentConfig, seed: u64, pattern: &str) -> Result<&TrainingSet> {
        let key = (seed, pattern.to_string());
        if !self.features.contains_key(&key) {
            let cfg = variant(cfg, seed, pattern);
            let data = training_set(&cfg)?;
            self.features.insert(key.clone(), data);
        }
        Ok(&self.features[&key])
    }

    /// 10-fold (per config) overall success in percent.
    pub fn success(&mut self, cfg: &ExperimentConfig, seed: u64, pattern: &str, hp: &Hyperparams) -> Result<f64> {
        let key = (seed, pattern.to_string(), hp.label());
        if let Some(&s) = self.success.get(&key) {
            return Ok(s);
        }
        let folds = cfg.folds;
        let report = kfold_cv(self.training_set(cfg, seed, pattern)?, hp, folds, seed)?;
        self.success.insert(key, report.overall_success);
        Ok(report.overall_success)
    }
}

fn variant(cfg: &ExperimentConfig, seed: u64, pattern: &str) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        patterns: vec![pattern.to_string()],
        ..cfg.clone()
    }
}

fn first_exid(cfg: &ExperimentConfig) -> Result<crate::frame::Exid> {
    cfg.exids()?
        .first()
        .copied()
        .ok_or_else(|| Error::InvalidConfig("no EXID patterns configured".into()))
}

/// Simulated, feature-extracted training set for the first configured pattern.
pub fn training_set(cfg: &ExperimentConfig) -> Result<TrainingSet> {
    let fleet = Fleet::from_config(cfg)?;
    let obs = simulate_known(&fleet, first_exid(cfg)?, cfg)?;
    TrainingSet::from_labeled(&extract_all(&obs, cfg.rolloff)?)
}

/// The three classifiers of the accuracy claim.
pub fn headline_classifiers() -> [Hyperparams; 3] {
    [Hyperparams::linear_svm(), Hyperparams::neural_net(100), Hyperparams::bagged_trees(100)]
}

pub fn classification(cfg: &ExperimentConfig, study: &mut Study) -> Result<Outcome> {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut passed = true;
    for hp in headline_classifiers() {
        let s = study.success(cfg, cfg.seed, ALL_ZEROS, &hp)?;
        passed &= s >= MIN_SUCCESS;
        parts.push(format!("{} {s:.2}%", hp.label()));
    }
    let elapsed = start.elapsed();
    passed &= elapsed < CLASSIFICATION_BUDGET;
    Ok(Outcome {
        number: 4,
        title: "classification accuracy",
        passed,
        detail: format!("all-zeros EXID: {}; limit {MIN_SUCCESS}%", parts.join(", ")),
        elapsed,
    })
}

/// Model trained on all known signals with its novelty threshold set at the
/// EER point of a sweep over held-out known and alien signals.
#[derive(Debug, Clone)]
pub struct NoveltyRun {
    pub model: FingerprintModel,
    pub report: EvaluationReport,
    pub sweep: SweepResult,
}

/// Trains `hp`, cross-validates it and sweeps the novelty threshold.
pub fn novelty_run(cfg: &ExperimentConfig, data: &TrainingSet, hp: &Hyperparams) -> Result<NoveltyRun> {
    let exid = first_exid(cfg)?;
    let fleet = Fleet::from_config(cfg)?;
    let rows = |obs: Vec<Observation>| -> Result<Vec<Vec<f64>>> {
        Ok(extract_all(&obs, cfg.rolloff)?
            .into_iter()
            .map(|(f, _)| f.to_array().to_vec())
            .collect())
    };
    let known = rows(simulate_known_holdout(&fleet, exid, cfg)?)?;
    let alien = rows(simulate_aliens(&fleet, exid, cfg)?)?;
    let model = train(data, hp, cfg.seed)?;
    let grid = auto_grid(&model, &known, &alien)?;
    let sweep = threshold_sweep(&model, &known, &alien, &grid)?;
    let mut report = kfold_cv(data, hp, cfg.folds, cfg.seed)?;
    report.sweep = Some(sweep.clone());
    Ok(NoveltyRun {
        model: model.with_threshold(Some(sweep.eer_threshold)),
        report,
        sweep,
    })
}

/// The configured classifier if it is an SVM, otherwise the RBF SVM.
pub fn novelty_classifier(cfg: &ExperimentConfig) -> Hyperparams {
    if cfg.classifier.kind().is_svm() {
        cfg.classifier.clone()
    } else {
        Hyperparams::rbf_svm()
    }
}

pub fn novelty(cfg: &ExperimentConfig, study: &mut Study) -> Result<(Outcome, NoveltyRun)> {
    let start = Instant::now();
    let hp = novelty_classifier(cfg);
    let data = study.training_set(cfg, cfg.seed, &cfg.patterns[0])?.clone();
    let run = novelty_run(&variant(cfg, cfg.seed, &cfg.patterns[0]), &data, &hp)?;
    let points = &run.sweep.points;
    let fn_monotone = points.windows(2).all(|w| w[0].fn_rate <= w[1].fn_rate);
    let fp_monotone = points.windows(2).all(|w| w[0].fp_rate >= w[1].fp_rate);
    let aliens = cfg.alien_profiles * cfg.alien_signals;
    Ok((
        Outcome {
            number: 5,
            title: "novelty detection",
            passed: run.sweep.eer <= MAX_EER && fn_monotone && fp_monotone,
            detail: format!(
                "{} EER {:.4} at threshold {:.4} (limit {MAX_EER}), {} aliens over {} grid points, FN monotone {fn_monotone}, FP monotone {fp_monotone}",
                hp.label(),
                run.sweep.eer,
                run.sweep.eer_threshold,
                aliens,
                points.len()
            ),
            elapsed: start.elapsed(),
        },
        run,
    ))
}

pub fn trend_seeds(cfg: &ExperimentConfig) -> [u64; 3] {
    [cfg.seed, cfg.seed.wrapping_add(1), cfg.seed.wrapping_add(2)]
}

pub fn trend(cfg: &ExperimentConfig, study: &mut Study) -> Result<Outcome> {
    let start = Instant::now();
    let mut passed = true;
    let mut parts = Vec::new();
    for hp in headline_classifiers() {
        let mut holds = 0;
        let mut pairs = Vec::new();
        for seed in trend_seeds(cfg) {
            let zeros = study.success(cfg, seed, ALL_ZEROS, &hp)?;
            let ones = study.success(cfg, seed, ALL_ONES, &hp)?;
            holds += usize::from(zeros >= ones);
            pairs.push(format!("{zeros:.2}/{ones:.2}"));
        }
        passed &= holds >= 2;
        parts.push(format!("{} {holds}/3 [{}]", hp.label(), pairs.join(" ")));
    }
    Ok(Outcome {
        number: 6,
        title: "bit-string trend",
        passed,
        detail: format!("zeros/ones success per seed: {}", parts.join("; ")),
        elapsed: start.elapsed(),
    })
}

/// Monitor logs for the honest, masquerade and intrusion streams.
pub fn monitor_streams(cfg: &ExperimentConfig, model: &FingerprintModel) -> Result<[MonitorLog; 3]> {
    let exid = first_exid(cfg)?;
    let fleet = Fleet::from_config(cfg)?;
    let table = fleet_pairing(&fleet, exid)?;
    let run = |stream: Vec<Observation>| -> Result<MonitorLog> {
        let mut monitor = Monitor::new(model, &table, cfg.rolloff, cfg.escalation_k)?;
        for o in &stream {
            monitor.observe(&o.frame, &o.waveform)?;
        }
        Ok(monitor.into_log())
    };
    Ok([
        run(simulate_honest_stream(&fleet, exid, cfg, HONEST_FRAMES)?)?,
        run(simulate_masquerade(&fleet, exid, cfg, 0, 1, INJECTED_FRAMES)?)?,
        run(simulate_intrusion(&fleet, exid, cfg, 0, 0, INJECTED_FRAMES)?)?,
    ])
}

pub fn monitor_end_to_end(cfg: &ExperimentConfig, novelty: &NoveltyRun) -> Result<Outcome> {
    let start = Instant::now();
    let [honest, masquerade, intrusion] = monitor_streams(cfg, &novelty.model)?;
    let again = monitor_streams(cfg, &novelty.model)?;
    let deterministic = [&honest, &masquerade, &intrusion]
        .iter()
        .zip(&again)
        .all(|(a, b)| a.format() == b.format());
    let type1_alarm = intrusion.alarms.iter().any(|a| a.status == Status::Type1Alien);
    let passed = honest.alarms.is_empty()
        && !masquerade.alarms.is_empty()
        && type1_alarm
        && intrusion.count(Status::Type1Alien) > 0
        && deterministic;
    Ok(Outcome {
        number: 7,
        title: "monitor end to end",
        passed,
        detail: format!(
            "honest {HONEST_FRAMES} frames: {} alarms, OK rate {:.3}; type II: {} alarms, {} mismatches; type I: {} alarms, {} alien verdicts; deterministic {deterministic}",
            honest.alarms.len(),
            honest.ok_rate(),
            masquerade.alarms.len(),
            masquerade.count(Status::Type2Mismatch),
            intrusion.alarms.len(),
            intrusion.count(Status::Type1Alien),
        ),
        elapsed: start.elapsed(),
    })
}

pub const DATASET_DIR: &str = "dataset";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.csv";

/// Writes the dataset, thresholded model and report of the configured
/// classifier on the first configured pattern.
pub fn write_artifacts(cfg: &ExperimentConfig, dir: &Path) -> Result<NoveltyRun> {
    let exid = first_exid(cfg)?;
    let fleet = Fleet::from_config(cfg)?;
    let obs = simulate_known(&fleet, exid, cfg)?;
    write_dataset(&dir.join(DATASET_DIR), &obs)?;
    let data = TrainingSet::from_labeled(&extract_all(&obs, cfg.rolloff)?)?;
    let run = novelty_run(cfg, &data, &cfg.classifier)?;
    run.model.save(&dir.join(MODEL_FILE))?;
    write_report(&dir.join(REPORT_FILE), &run.report)?;
    Ok(run)
}

fn collect_files(root: &Path, at: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(at)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

/// First difference between two artifact trees, if any.
pub fn compare_trees(a: &Path, b: &Path) -> Result<Option<String>> {
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    collect_files(a, a, &mut fa)?;
    collect_files(b, b, &mut fb)?;
    if fa != fb {
        return Ok(Some(format!("file lists differ ({} vs {} files)", fa.len(), fb.len())));
    }
    for rel in &fa {
        if fs::read(a.join(rel))? != fs::read(b.join(rel))? {
            return Ok(Some(format!("{} differs", rel.display())));
        }
    }
    Ok(None)
}

/// Writes the artifacts into `first` and `second` and compares the trees.
pub fn determinism(cfg: &ExperimentConfig, first: &Path, second: &Path) -> Result<Outcome> {
    let start = Instant::now();
    for dir in [first, second] {
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        write_artifacts(cfg, dir)?;
    }
    let diff = compare_trees(first, second)?;
    let mut files = Vec::new();
    collect_files(first, first, &mut files)?;
    Ok(Outcome {
        number: 8,
        title: "determinism",
        passed: diff.is_none(),
        detail: match diff {
            None => format!("{} files byte-identical across two runs", files.len()),
            Some(d) => d,
        },
        elapsed: start.elapsed(),
    })
}

/// Runs every criterion, reporting each outcome as soon as it is known.
/// Artifacts land in `out`; the determinism rerun uses `out/rerun` and is
/// removed afterwards.
pub fn run_all(cfg: &ExperimentConfig, out: &Path, mut report: impl FnMut(&Outcome)) -> Result<Vec<Outcome>> {
    cfg.validate()?;
    let mut outcomes = Vec::new();
    let mut push = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };
    push(feature_oracle(cfg.seed)?);
    push(dft_oracle(cfg.seed)?);
    push(frame_properties(cfg.seed)?);
    let mut study = Study::new();
    push(classification(cfg, &mut study)?);
    let (outcome, run) = novelty(cfg, &mut study)?;
    push(outcome);
    push(trend(cfg, &mut study)?);
    push(monitor_end_to_end(cfg, &run)?);
    fs::create_dir_all(out)?;
    let rerun = out.join("rerun");
    push(determinism(cfg, &out.join("artifacts"), &rerun)?);
    fs::remove_dir_all(&rerun)?;
    Ok(outcomes)
}
