//! One-vs-rest support vector machines.
//!
//! The linear machine minimizes the regularized hinge loss with mini-batch
//! sub-gradient steps (Pegasos schedule, iterate averaging). The RBF machine
//! solves the kernelized dual by coordinate descent. Both fold the bias into
//! the model as a constant input, so the dual has no equality constraint.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const BATCH: usize = 16;
const DUAL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    /// One weight row per class, bias last.
    pub weights: Vec<Vec<f64>>,
}

impl LinearSvm {
    pub fn fit(rows: &[Vec<f64>], labels: &[usize], classes: usize, c: f64, epochs: usize, seed: u64) -> Self {
        let weights = (0..classes)
            .into_par_iter()
            .map(|class| {
                let targets: Vec<f64> = labels
                    .iter()
                    .map(|&l| if l == class { 1.0 } else { -1.0 })
                    .collect();
                pegasos(rows, &targets, c, epochs, crate::seed::derive_seed(seed, class as u64))
            })
            .collect();
        LinearSvm { weights }
    }

    /// Signed decision value per class.
    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| {
                let (bias, coef) = w.split_last().expect("weights carry a bias term");
                coef.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
            })
            .collect()
    }
}

fn pegasos(rows: &[Vec<f64>], targets: &[f64], c: f64, epochs: usize, seed: u64) -> Vec<f64> {
    let n = rows.len();
    let dim = rows[0].len() + 1;
    let lambda = 1.0 / (c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let mut averaged = 0usize;
    let steps_per_epoch = n.div_ceil(BATCH);
    let total = epochs * steps_per_epoch;
    let mut grad = vec![0.0; dim];
    let mut t = 0usize;

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(BATCH) {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let x = &rows[i];
                let margin = targets[i] * (dot_bias(&w, x));
                if margin < 1.0 {
                    for (g, xv) in grad.iter_mut().zip(x) {
                        *g += targets[i] * xv;
                    }
                    grad[dim - 1] += targets[i];
                }
            }
            let shrink = 1.0 - eta * lambda;
            let step = eta / batch.len() as f64;
            for (wv, g) in w.iter_mut().zip(&grad) {
                *wv = *wv * shrink + step * g;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let k = radius / norm;
                w.iter_mut().for_each(|v| *v *= k);
            }
            if t > total / 2 {
                averaged += 1;
                for (a, wv) in avg.iter_mut().zip(&w) {
                    *a += (wv - *a) / averaged as f64;
                }
            }
        }
    }
    if averaged == 0 { w } else { avg }
}

fn dot_bias(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[w.len() - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfSvm {
    pub gamma: f64,
    pub support: Vec<Vec<f64>>,
    /// `coef[class][j]` = alpha_j * y_j for support vector `j`.
    pub coef: Vec<Vec<f64>>,
}

impl RbfSvm {
    pub fn fit(rows: &[Vec<f64>], labels: &[usize], classes: usize, c: f64, gamma: f64, epochs: usize, seed: u64) -> Self {
        let n = rows.len();
        // Kernel plus one, which absorbs the bias.
        let gram: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| rbf(&rows[i], &rows[j], gamma) + 1.0).collect())
            .collect();

        let alphas: Vec<Vec<f64>> = (0..classes)
            .into_par_iter()
            .map(|class| {
                let y: Vec<f64> = labels
                    .iter()
                    .map(|&l| if l == class { 1.0 } else { -1.0 })
                    .collect();
                dual_cd(&gram, &y, c, epochs, crate::seed::derive_seed(seed, class as u64))
            })
            .collect();

        let keep: Vec<usize> = (0..n)
            .filter(|&j| alphas.iter().any(|a| a[j] > 0.0))
            .collect();
        let support = keep.iter().map(|&j| rows[j].clone()).collect();
        let coef = alphas
            .iter()
            .enumerate()
            .map(|(class, a)| {
                keep.iter()
                    .map(|&j| a[j] * if labels[j] == class { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        RbfSvm { gamma, support, coef }
    }

    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self.support.iter().map(|s| rbf(s, x, self.gamma) + 1.0).collect();
        self.coef
            .iter()
            .map(|c| c.iter().zip(&k).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

fn dual_cd(gram: &[Vec<f64>], y: &[f64], c: f64, epochs: usize, seed: u64) -> Vec<f64> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // f[i] = sum_j alpha_j y_j K(i, j)
    let mut f = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let g = y[i] * f[i] - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg == 0.0 {
                continue;
            }
            let new = (alpha[i] - g / gram[i][i]).clamp(0.0, c);
            let delta = (new - alpha[i]) * y[i];
            if delta != 0.0 {
                alpha[i] = new;
                for (fj, kij) in f.iter_mut().zip(&gram[i]) {
                    *fj += delta * kij;
                }
            }
        }
        if max_violation < DUAL_TOLERANCE {
            break;
        }
    }
    alpha
}
