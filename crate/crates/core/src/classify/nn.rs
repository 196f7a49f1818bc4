//! Single-hidden-layer perceptron: logistic hidden units, softmax output,
//! cross-entropy loss, mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// hidden x inputs, row-major
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// outputs x hidden, row-major
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpTraining {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    logits.iter_mut().for_each(|v| *v /= sum);
}

impl Mlp {
    fn init(inputs: usize, hidden: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let a1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + outputs) as f64).sqrt();
        Mlp {
            inputs,
            hidden,
            outputs,
            w1: (0..hidden * inputs).map(|_| rng.random_range(-a1..a1)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..outputs * hidden).map(|_| rng.random_range(-a2..a2)).collect(),
            b2: vec![0.0; outputs],
        }
    }

    fn hidden_activations(&self, x: &[f64], out: &mut [f64]) {
        for (h, slot) in out.iter_mut().enumerate() {
            let row = &self.w1[h * self.inputs..(h + 1) * self.inputs];
            let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h];
            *slot = sigmoid(z);
        }
    }

    fn output(&self, hidden: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            *slot = row.iter().zip(hidden).map(|(w, v)| w * v).sum::<f64>() + self.b2[o];
        }
        softmax(out);
    }

    /// Class probabilities.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        let mut o = vec![0.0; self.outputs];
        self.hidden_activations(x, &mut h);
        self.output(&h, &mut o);
        o
    }

    pub fn fit(rows: &[Vec<f64>], labels: &[usize], classes: usize, cfg: &MlpTraining, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = rows[0].len();
        let mut net = Mlp::init(inputs, cfg.hidden, classes, &mut rng);
        let mut order: Vec<usize> = (0..rows.len()).collect();

        let mut gw1 = vec![0.0; net.w1.len()];
        let mut gb1 = vec![0.0; net.b1.len()];
        let mut gw2 = vec![0.0; net.w2.len()];
        let mut gb2 = vec![0.0; net.b2.len()];
        let mut vw1 = vec![0.0; net.w1.len()];
        let mut vb1 = vec![0.0; net.b1.len()];
        let mut vw2 = vec![0.0; net.w2.len()];
        let mut vb2 = vec![0.0; net.b2.len()];
        let mut h = vec![0.0; cfg.hidden];
        let mut o = vec![0.0; classes];
        let mut dh = vec![0.0; cfg.hidden];

        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size.max(1)) {
                gw1.iter_mut().for_each(|g| *g = 0.0);
                gb1.iter_mut().for_each(|g| *g = 0.0);
                gw2.iter_mut().for_each(|g| *g = 0.0);
                gb2.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    let x = &rows[i];
                    net.hidden_activations(x, &mut h);
                    net.output(&h, &mut o);
                    // softmax + cross-entropy: dL/dz = p - onehot
                    o[labels[i]] -= 1.0;
                    dh.iter_mut().for_each(|d| *d = 0.0);
                    for (k, &dk) in o.iter().enumerate() {
                        gb2[k] += dk;
                        let row = k * cfg.hidden;
                        for j in 0..cfg.hidden {
                            gw2[row + j] += dk * h[j];
                            dh[j] += dk * net.w2[row + j];
                        }
                    }
                    for j in 0..cfg.hidden {
                        let dz = dh[j] * h[j] * (1.0 - h[j]);
                        gb1[j] += dz;
                        let row = j * inputs;
                        for (g, xv) in gw1[row..row + inputs].iter_mut().zip(x) {
                            *g += dz * xv;
                        }
                    }
                }
                let step = cfg.learning_rate / batch.len() as f64;
                update(&mut net.w1, &mut vw1, &gw1, step, cfg.momentum);
                update(&mut net.b1, &mut vb1, &gb1, step, cfg.momentum);
                update(&mut net.w2, &mut vw2, &gw2, step, cfg.momentum);
                update(&mut net.b2, &mut vb2, &gb2, step, cfg.momentum);
            }
        }
        net
    }
}

fn update(params: &mut [f64], velocity: &mut [f64], grad: &[f64], step: f64, momentum: f64) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v - step * g;
        *p += *v;
    }
}
