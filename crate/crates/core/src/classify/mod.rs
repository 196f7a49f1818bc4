//! Fingerprint templates: supervised classifiers over standardized feature
//! vectors, plus score-threshold novelty detection and evaluation.
//!
//! Score scales per kind:
//! - SVM: signed one-vs-rest decision values (unbounded).
//! - NN: softmax probabilities, in `[0, 1]`, summing to 1.
//! - BDT: fraction of trees voting for the class, in `[0, 1]`, summing to 1.

pub mod bdt;
pub mod eval;
pub mod nn;
pub mod normalize;
pub mod svm;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub use eval::{
    auto_grid, kfold_cv, read_report, stratified_folds, threshold_sweep, write_report,
    EvaluationReport, SweepPoint, SweepResult,
};
pub use normalize::Standardizer;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    LinearSvm,
    RbfSvm,
    NeuralNet,
    BaggedTrees,
}

impl ClassifierKind {
    pub fn is_svm(self) -> bool {
        matches!(self, ClassifierKind::LinearSvm | ClassifierKind::RbfSvm)
    }

    /// Lowest and highest attainable score, if bounded.
    pub fn score_bounds(self) -> (f64, f64) {
        match self {
            ClassifierKind::LinearSvm | ClassifierKind::RbfSvm => (f64::NEG_INFINITY, f64::INFINITY),
            ClassifierKind::NeuralNet | ClassifierKind::BaggedTrees => (0.0, 1.0),
        }
    }
}

/// Classifier choice with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Hyperparams {
    LinearSvm {
        c: f64,
        epochs: usize,
    },
    RbfSvm {
        c: f64,
        /// `None` means 1 / feature count.
        gamma: Option<f64>,
        epochs: usize,
    },
    NeuralNet {
        hidden: usize,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        momentum: f64,
    },
    BaggedTrees {
        trees: usize,
        max_depth: usize,
    },
}

impl Hyperparams {
    pub fn linear_svm() -> Self {
        Hyperparams::LinearSvm { c: 1.0, epochs: 200 }
    }

    pub fn rbf_svm() -> Self {
        Hyperparams::RbfSvm {
            c: 10.0,
            gamma: Some(0.4),
            epochs: 100,
        }
    }

    pub fn neural_net(hidden: usize) -> Self {
        Hyperparams::NeuralNet {
            hidden,
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 32,
            momentum: 0.9,
        }
    }

    pub fn bagged_trees(trees: usize) -> Self {
        Hyperparams::BaggedTrees { trees, max_depth: 12 }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyperparams::LinearSvm { .. } => ClassifierKind::LinearSvm,
            Hyperparams::RbfSvm { .. } => ClassifierKind::RbfSvm,
            Hyperparams::NeuralNet { .. } => ClassifierKind::NeuralNet,
            Hyperparams::BaggedTrees { .. } => ClassifierKind::BaggedTrees,
        }
    }

    /// Short column label, e.g. `svm-linear`, `nn-100`, `bdt-50`.
    pub fn label(&self) -> String {
        match self {
            Hyperparams::LinearSvm { .. } => "svm-linear".into(),
            Hyperparams::RbfSvm { .. } => "svm-rbf".into(),
            Hyperparams::NeuralNet { hidden, .. } => format!("nn-{hidden}"),
            Hyperparams::BaggedTrees { trees, .. } => format!("bdt-{trees}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        match *self {
            Hyperparams::LinearSvm { c, epochs } | Hyperparams::RbfSvm { c, epochs, .. } => {
                if !(c > 0.0) || epochs == 0 {
                    return bad("SVM needs C > 0 and at least one epoch");
                }
                if let Hyperparams::RbfSvm { gamma: Some(g), .. } = *self {
                    if !(g > 0.0) {
                        return bad("RBF gamma must be positive");
                    }
                }
            }
            Hyperparams::NeuralNet {
                hidden,
                epochs,
                learning_rate,
                batch_size,
                momentum,
            } => {
                if hidden == 0 || epochs == 0 || batch_size == 0 || !(learning_rate > 0.0) || !(0.0..1.0).contains(&momentum) {
                    return bad("NN needs hidden, epochs, batch size > 0, learning rate > 0, momentum in [0, 1)");
                }
            }
            Hyperparams::BaggedTrees { trees, .. } => {
                if trees == 0 {
                    return bad("BDT needs at least one tree");
                }
            }
        }
        Ok(())
    }
}

/// Labeled observations. Rows may have any fixed dimension; fingerprints use 17.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl TrainingSet {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, classes: Vec<String>) -> Result<Self> {
        let set = TrainingSet { rows, labels, classes };
        set.validate()?;
        Ok(set)
    }

    /// Builds the class list in order of first appearance.
    pub fn from_labeled<S: AsRef<str>>(observations: &[(FeatureVector, S)]) -> Result<Self> {
        let mut classes: Vec<String> = Vec::new();
        let mut rows = Vec::with_capacity(observations.len());
        let mut labels = Vec::with_capacity(observations.len());
        for (fv, label) in observations {
            let label = label.as_ref();
            let idx = match classes.iter().position(|c| c == label) {
                Some(i) => i,
                None => {
                    classes.push(label.to_string());
                    classes.len() - 1
                }
            };
            rows.push(fv.to_array().to_vec());
            labels.push(idx);
        }
        TrainingSet::new(rows, labels, classes)
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        TrainingSet {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.labels.len() {
            return Err(Error::InvalidInput("rows and labels differ in length".into()));
        }
        if self.classes.len() < 2 {
            return Err(Error::DegenerateTask(format!(
                "{} class(es); at least 2 required",
                self.classes.len()
            )));
        }
        let dim = self.dim();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidInput(format!("row {i} has dimension {}, expected {dim}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has non-finite features")));
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.classes.len()) {
            return Err(Error::InvalidInput(format!("label index {bad} outside class set")));
        }
        for (class, size) in self.classes.iter().zip(self.class_sizes()) {
            if size < 2 {
                return Err(Error::InsufficientData {
                    class: class.clone(),
                    count: size,
                    needed: 2,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelParams {
    LinearSvm(svm::LinearSvm),
    RbfSvm(svm::RbfSvm),
    NeuralNet(nn::Mlp),
    BaggedTrees(bdt::BaggedTrees),
}

/// A trained template database entry set: classifier, class list, feature
/// standardization and the novelty threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintModel {
    pub version: u32,
    pub hyperparams: Hyperparams,
    pub classes: Vec<String>,
    pub normalizer: Standardizer,
    pub params: ModelParams,
    /// Novelty cutoff on the kind's score scale; `None` never rejects.
    pub threshold: Option<f64>,
}

/// Outcome of one thresholded classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub scores: Vec<f64>,
    /// Winning class index, or `None` when every score is below the threshold.
    pub predicted: Option<usize>,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn train(data: &TrainingSet, hyperparams: &Hyperparams, seed: u64) -> Result<FingerprintModel> {
    data.validate()?;
    hyperparams.validate()?;
    let normalizer = Standardizer::fit(&data.rows);
    let rows = normalizer.apply_all(&data.rows);
    let classes = data.classes.len();
    let labels = &data.labels;
    let params = match *hyperparams {
        Hyperparams::LinearSvm { c, epochs } => {
            ModelParams::LinearSvm(svm::LinearSvm::fit(&rows, labels, classes, c, epochs, seed))
        }
        Hyperparams::RbfSvm { c, gamma, epochs } => {
            let gamma = gamma.unwrap_or(1.0 / data.dim() as f64);
            ModelParams::RbfSvm(svm::RbfSvm::fit(&rows, labels, classes, c, gamma, epochs, seed))
        }
        Hyperparams::NeuralNet {
            hidden,
            epochs,
            learning_rate,
            batch_size,
            momentum,
        } => {
            let cfg = nn::MlpTraining {
                hidden,
                epochs,
                learning_rate,
                batch_size,
                momentum,
            };
            ModelParams::NeuralNet(nn::Mlp::fit(&rows, labels, classes, &cfg, seed))
        }
        Hyperparams::BaggedTrees { trees, max_depth } => {
            ModelParams::BaggedTrees(bdt::BaggedTrees::fit(&rows, labels, classes, trees, max_depth, seed))
        }
    };
    Ok(FingerprintModel {
        version: MODEL_FORMAT_VERSION,
        hyperparams: hyperparams.clone(),
        classes: data.classes.clone(),
        normalizer,
        params,
        threshold: None,
    })
}

impl FingerprintModel {
    pub fn kind(&self) -> ClassifierKind {
        self.hyperparams.kind()
    }

    pub fn with_threshold(mut self, threshold: Option<f64>) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    /// One score per class on the kind's scale; argmax is the predicted class.
    pub fn predict_scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.normalizer.dim() {
            return Err(Error::InvalidInput(format!(
                "feature dimension {} does not match model dimension {}",
                row.len(),
                self.normalizer.dim()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        let x = self.normalizer.apply(row);
        Ok(match &self.params {
            ModelParams::LinearSvm(m) => m.decision(&x),
            ModelParams::RbfSvm(m) => m.decision(&x),
            ModelParams::NeuralNet(m) => m.predict(&x),
            ModelParams::BaggedTrees(m) => m.vote_fractions(&x),
        })
    }

    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_scores(row)?))
    }

    /// Argmax class unless every score falls below the threshold.
    pub fn classify_with_threshold(&self, row: &[f64]) -> Result<Decision> {
        let scores = self.predict_scores(row)?;
        let best = argmax(&scores);
        let predicted = match self.threshold {
            Some(t) if scores[best] < t => None,
            _ => Some(best),
        };
        Ok(Decision { scores, predicted })
    }

    pub fn classify_features(&self, fv: &FeatureVector) -> Result<Decision> {
        self.classify_with_threshold(&fv.to_array())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse("model", e))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let model: FingerprintModel = serde_json::from_str(&text).map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Ingestion {
                path: path.to_path_buf(),
                message: format!("model format version {} unsupported", model.version),
            });
        }
        Ok(model)
    }
}
