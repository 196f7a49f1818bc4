//! Stratified k-fold cross validation, confusion matrices, and the
//! false-negative / false-positive threshold sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{train, FingerprintModel, Hyperparams, TrainingSet};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub classes: Vec<String>,
    /// Pooled test counts, rows = true class, columns = predicted class.
    pub counts: Vec<Vec<usize>>,
    /// Row-normalized percentages of `counts`.
    pub confusion: Vec<Vec<f64>>,
    /// Percent of all held-out observations classified correctly.
    pub overall_success: f64,
    pub fold_success: Vec<f64>,
    pub sweep: Option<SweepResult>,
}

impl EvaluationReport {
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<usize>>, fold_success: Vec<f64>) -> Self {
        let confusion = counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
                    .collect()
            })
            .collect();
        let total: usize = counts.iter().flatten().sum();
        let correct: usize = (0..counts.len()).map(|i| counts[i][i]).sum();
        EvaluationReport {
            classes,
            counts,
            confusion,
            overall_success: if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 },
            fold_success,
            sweep: None,
        }
    }

    pub fn per_class_success(&self) -> Vec<f64> {
        (0..self.classes.len()).map(|i| self.confusion[i][i]).collect()
    }
}

/// Assigns each observation a fold in `0..k`, stratified by class.
///
/// Within each class the members are shuffled with `seed` and dealt
/// round-robin, continuing the deal where the previous class stopped so
/// fold sizes stay balanced overall.
pub fn stratified_folds(labels: &[usize], classes: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

pub fn kfold_cv(data: &TrainingSet, hyperparams: &Hyperparams, k: usize, seed: u64) -> Result<EvaluationReport> {
    data.validate()?;
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k = {k}; cross validation needs at least 2 folds")));
    }
    for (class, size) in data.classes.iter().zip(data.class_sizes()) {
        if size < k {
            return Err(Error::InsufficientData {
                class: class.clone(),
                count: size,
                needed: k,
            });
        }
    }
    let c = data.classes.len();
    let folds = stratified_folds(&data.labels, c, k, seed);

    let per_fold: Vec<Result<Vec<Vec<usize>>>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
            let model = train(&data.subset(&train_idx), hyperparams, derive_seed(seed, 1000 + f as u64))?;
            let mut counts = vec![vec![0usize; c]; c];
            for i in (0..data.len()).filter(|&i| folds[i] == f) {
                counts[data.labels[i]][model.predict(&data.rows[i])?] += 1;
            }
            Ok(counts)
        })
        .collect();

    let mut counts = vec![vec![0usize; c]; c];
    let mut fold_success = Vec::with_capacity(k);
    for fold_counts in per_fold {
        let fold_counts = fold_counts?;
        let total: usize = fold_counts.iter().flatten().sum();
        let correct: usize = (0..c).map(|i| fold_counts[i][i]).sum();
        fold_success.push(100.0 * correct as f64 / total as f64);
        for (acc, row) in counts.iter_mut().zip(&fold_counts) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    Ok(EvaluationReport::from_counts(data.classes.clone(), counts, fold_success))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    /// Fraction of known-device observations rejected as unknown.
    pub fn_rate: f64,
    /// Fraction of alien observations accepted as a known class.
    pub fp_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub eer: f64,
    pub eer_threshold: f64,
}

fn max_scores(model: &FingerprintModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.iter()
        .map(|r| {
            model
                .predict_scores(r)
                .map(|s| s.into_iter().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

/// Thresholds at every midpoint between distinct observed maximum scores,
/// plus one below the smallest and one above the largest.
pub fn auto_grid(model: &FingerprintModel, known: &[Vec<f64>], alien: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut scores = max_scores(model, known)?;
    scores.extend(max_scores(model, alien)?);
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let (Some(&lo), Some(&hi)) = (scores.first(), scores.last()) else {
        return Err(Error::InvalidInput("no observations to build a grid from".into()));
    };
    let pad = (hi - lo).abs().max(1.0);
    let mut grid = vec![lo - pad];
    grid.extend(scores.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    grid.push(hi + pad);
    Ok(grid)
}

/// FN/FP rates over `grid`; the grid is evaluated in ascending order.
///
/// The equal error rate is taken where `|FN - FP|` is smallest (smallest
/// threshold on ties) and reported as the mean of the two rates there.
pub fn threshold_sweep(model: &FingerprintModel, known: &[Vec<f64>], alien: &[Vec<f64>], grid: &[f64]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty threshold grid".into()));
    }
    if known.is_empty() || alien.is_empty() {
        return Err(Error::InvalidInput("threshold sweep needs known and alien observations".into()));
    }
    let known_max = max_scores(model, known)?;
    let alien_max = max_scores(model, alien)?;
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);

    let points: Vec<SweepPoint> = grid
        .iter()
        .map(|&t| SweepPoint {
            threshold: t,
            fn_rate: known_max.iter().filter(|&&s| s < t).count() as f64 / known_max.len() as f64,
            fp_rate: alien_max.iter().filter(|&&s| s >= t).count() as f64 / alien_max.len() as f64,
        })
        .collect();
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        let gap = (p.fn_rate - p.fp_rate).abs();
        if gap < (points[best].fn_rate - points[best].fp_rate).abs() {
            best = i;
        }
    }
    let at = points[best];
    Ok(SweepResult {
        points,
        eer: (at.fn_rate + at.fp_rate) / 2.0,
        eer_threshold: at.threshold,
    })
}

/// Report file: confusion matrix as CSV percentages, a blank line, then
/// `key=value` lines.
pub fn write_report(path: &Path, report: &EvaluationReport) -> Result<()> {
    fs::write(path, format_report(report))?;
    Ok(())
}

pub fn format_report(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "true\\predicted,{}", report.classes.join(","));
    for (class, row) in report.classes.iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
        let _ = writeln!(out, "{class},{}", cells.join(","));
    }
    out.push('\n');
    let _ = writeln!(out, "overall_success={:.4}", report.overall_success);
    if let Some(sweep) = &report.sweep {
        let _ = writeln!(out, "eer={:.6}", sweep.eer);
        let _ = writeln!(out, "eer_threshold={}", sweep.eer_threshold);
    }
    out
}

/// Parses the key-value block and confusion matrix back out of a report file.
pub fn read_report(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>, Vec<(String, f64)>)> {
    let text = fs::read_to_string(path)?;
    let (matrix, kv) = text
        .split_once("\n\n")
        .ok_or_else(|| Error::parse("report", "missing key-value block"))?;
    let mut lines = matrix.lines();
    let header = lines.next().ok_or_else(|| Error::parse("report", "empty"))?;
    let classes: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|e| Error::parse("report", e)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = kv
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (k, v) = l.split_once('=').ok_or_else(|| Error::parse("report", l))?;
            Ok((k.to_string(), v.parse::<f64>().map_err(|e| Error::parse("report", e))?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((classes, rows, pairs))
}
