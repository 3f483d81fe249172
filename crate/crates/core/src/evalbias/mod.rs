//! Measurement apparatus for bias unlearning: synthetic datasets with a
//! controllable class/bias correlation, AUC with per-group gaps, and a
//! linear probe that quantifies how much bias signal survives in a frozen
//! feature representation.

mod auc;

pub use auc::{auc, group_auc, GroupAuc};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::unlearn::{
    self, softmax, train, Dataset, Linear, Matrix, Model, TrainConfig, TrainError, TrainOutcome,
};

/// Errors from dataset generation and evaluation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least one positive and one negative example")]
    SingleClass,
    #[error("bias labels collapse to a single class")]
    SingleClassBias,
    #[error("scores must be finite")]
    NonFiniteScore,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("model expects {expected} primary classes, found {actual}")]
    UnsupportedClasses { expected: usize, actual: usize },
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Spec for a two-class dataset with a spurious bias axis. Class labels
/// are uniform; the bias label agrees with the class with the split's
/// correlation; inputs are the class mean, plus a displacement along the
/// bias axis when `b = 1`, plus unit Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBiasSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub input_dim: usize,
    /// Distance between the two class means (along axis 0).
    pub class_separation: f64,
    /// Displacement along axis 1 applied to `b = 1` examples.
    pub bias_shift: f64,
    /// P(b = y) in the training split, in [0.5, 1].
    pub train_correlation: f64,
    /// P(b = y) in the test split; 0.5 makes bias and class independent.
    pub test_correlation: f64,
    pub seed: u64,
}

impl Default for SyntheticBiasSpec {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 2000,
            input_dim: 10,
            class_separation: 2.0,
            bias_shift: 3.0,
            train_correlation: 0.95,
            test_correlation: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticBiasSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n_train < 4 || self.n_test < 4 {
            return Err(EvalError::InvalidSpec(
                "n_train and n_test must be at least 4 (two per class)".into(),
            ));
        }
        if self.input_dim < 2 {
            return Err(EvalError::InvalidSpec("input_dim must be at least 2".into()));
        }
        for (name, v) in [
            ("train_correlation", self.train_correlation),
            ("test_correlation", self.test_correlation),
        ] {
            if !(0.5..=1.0).contains(&v) {
                return Err(EvalError::InvalidSpec(format!("{name} must be in [0.5, 1], got {v}")));
            }
        }
        for (name, v) in
            [("class_separation", self.class_separation), ("bias_shift", self.bias_shift)]
        {
            if !v.is_finite() || v < 0.0 {
                return Err(EvalError::InvalidSpec(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One labelled example. The evaluation group tag mirrors the bias label,
/// which is the structural analogue of grouping test images by skin type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledExample<T> {
    pub x: Vec<T>,
    pub y: usize,
    pub b: usize,
    pub group: usize,
}

/// Train and test splits of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset<T> {
    pub train: Vec<LabelledExample<T>>,
    pub test: Vec<LabelledExample<T>>,
}

/// Generates the dataset described by `spec`, bit-identically for a given
/// seed.
pub fn gen_synthetic_biased<T: Real>(
    spec: &SyntheticBiasSpec,
) -> Result<SyntheticDataset<T>, EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let split = |n: usize, correlation: f64, rng: &mut ChaCha8Rng| {
        (0..n)
            .map(|_| {
                let y = rng.random_range(0..2usize);
                let b = if rng.random::<f64>() < correlation { y } else { 1 - y };
                let mut x = Vec::with_capacity(spec.input_dim);
                for dim in 0..spec.input_dim {
                    let mut value: f64 = rng.sample(StandardNormal);
                    if dim == 0 {
                        value += if y == 1 {
                            spec.class_separation / 2.0
                        } else {
                            -spec.class_separation / 2.0
                        };
                    }
                    if dim == 1 && b == 1 {
                        value += spec.bias_shift;
                    }
                    x.push(T::c(value));
                }
                LabelledExample { x, y, b, group: b }
            })
            .collect::<Vec<_>>()
    };
    let train = split(spec.n_train, spec.train_correlation, &mut rng);
    let test = split(spec.n_test, spec.test_correlation, &mut rng);
    Ok(SyntheticDataset { train, test })
}

/// Packs examples into a training set for [`crate::unlearn::train`].
pub fn to_training_set<T: Real>(examples: &[LabelledExample<T>]) -> Result<Dataset<T>, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let dim = examples[0].x.len();
    let inputs = Matrix::from_fn(examples.len(), dim, |r, c| examples[r].x[c]);
    let primary = examples.iter().map(|e| e.y).collect();
    let bias = examples.iter().map(|e| e.b).collect();
    Ok(Dataset::new(inputs, primary, Some(bias), 2, 2)?)
}

/// Linear-probe configuration; the probe trains with the same heavy-ball
/// SGD as the main models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Fraction of the examples held out for measuring probe accuracy.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 32,
            holdout_fraction: 0.3,
            seed: 0,
        }
    }
}

/// Trains a fresh linear classifier on `(feature, bias-label)` pairs and
/// reports held-out accuracy — the operational measure of how much bias
/// information the representation still carries.
pub fn bias_probe<T: Real>(
    features: &[(Vec<T>, usize)],
    config: &ProbeConfig,
) -> Result<f64, EvalError> {
    if features.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(EvalError::InvalidSpec(format!(
            "holdout_fraction must be in (0, 1), got {}",
            config.holdout_fraction
        )));
    }
    let n_classes = features.iter().map(|(_, b)| b + 1).max().unwrap_or(0).max(2);
    let distinct = {
        let mut seen = std::collections::BTreeSet::new();
        for (_, b) in features {
            seen.insert(*b);
        }
        seen.len()
    };
    if distinct < 2 {
        return Err(EvalError::SingleClassBias);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let n_holdout = ((features.len() as f64 * config.holdout_fraction).round() as usize)
        .clamp(1, features.len() - 1);
    let (holdout_idx, train_idx) = order.split_at(n_holdout);

    let dim = features[0].0.len();
    let gather = |idx: &[usize]| -> (Matrix<T>, Vec<usize>) {
        let m = Matrix::from_fn(idx.len(), dim, |r, c| features[idx[r]].0[c]);
        let l = idx.iter().map(|&i| features[i].1).collect();
        (m, l)
    };
    let (train_x, train_b) = gather(train_idx);
    let (hold_x, hold_b) = gather(holdout_idx);

    // plain logistic-style head: zero init keeps the problem convex and
    // the run deterministic
    let mut probe = Linear::<T>::zeros(n_classes, dim);
    let mut vel_w = vec![T::zero(); n_classes * dim];
    let mut vel_b = vec![T::zero(); n_classes];
    let lr = T::c(config.learning_rate);
    let momentum = T::c(config.momentum);
    let mut indices: Vec<usize> = (0..train_idx.len()).collect();
    for _ in 0..config.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(config.batch_size.max(1)) {
            let x = Matrix::from_fn(chunk.len(), dim, |r, c| train_x.get(chunk[r], c));
            let labels: Vec<usize> = chunk.iter().map(|&i| train_b[i]).collect();
            let logits = probe.forward(&x);
            let d_logits = unlearn::cross_entropy_grad(&logits, &labels);
            let d_w = d_logits.matmul_tn(&x);
            let d_b = d_logits.column_sums();
            for (i, (v, g)) in vel_w.iter_mut().zip(d_w.data()).enumerate() {
                *v = momentum * *v + *g;
                let row = i / dim;
                let col = i % dim;
                let updated = probe.weight.get(row, col) - lr * *v;
                probe.weight.set(row, col, updated);
            }
            for ((v, g), b) in vel_b.iter_mut().zip(&d_b).zip(probe.bias.iter_mut()) {
                *v = momentum * *v + *g;
                *b -= lr * *v;
            }
        }
    }

    let logits = probe.forward(&hold_x);
    let hits = logits
        .iter_rows()
        .zip(&hold_b)
        .filter(|(row, &label)| unlearn::argmax(row) == label)
        .count();
    Ok(hits as f64 / hold_b.len() as f64)
}

/// Evaluation summary for one trained model on one test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_auc: f64,
    /// Per-group AUC, keyed by the group tag.
    pub auc_per_group: BTreeMap<String, f64>,
    /// Groups that could not be scored, with reasons.
    pub skipped_groups: BTreeMap<String, String>,
    /// `max - min` over the computed per-group AUCs.
    pub gap: f64,
    /// Held-out accuracy of a linear probe predicting the bias label from
    /// frozen features.
    pub bias_probe_accuracy: f64,
}

/// Per-example score row for CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub index: usize,
    pub score: f64,
    pub y: usize,
    pub b: usize,
}

/// Scores every example with the model's P(class 1).
pub fn example_scores<T: Real>(
    model: &Model<T>,
    examples: &[LabelledExample<T>],
) -> Result<Vec<ScoreRow>, EvalError> {
    if model.dims.n_primary_classes != 2 {
        return Err(EvalError::UnsupportedClasses {
            expected: 2,
            actual: model.dims.n_primary_classes,
        });
    }
    let mut rows = Vec::with_capacity(examples.len());
    for (index, example) in examples.iter().enumerate() {
        let (_, primary_logits, _) = model.forward(&example.x)?;
        let p = softmax(&primary_logits);
        rows.push(ScoreRow {
            index,
            score: p[1].to_f64_lossy(),
            y: example.y,
            b: example.b,
        });
    }
    Ok(rows)
}

/// Evaluates a trained model: overall AUC, per-group AUC and gap (groups
/// are the bias labels), and a bias probe over the model's frozen
/// features of these same examples.
pub fn evaluate_model<T: Real>(
    model: &Model<T>,
    examples: &[LabelledExample<T>],
    probe: &ProbeConfig,
) -> Result<EvalReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let rows = example_scores(model, examples)?;
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.y == 1).collect();
    let groups: Vec<usize> = examples.iter().map(|e| e.group).collect();

    let overall = auc(&scores, &labels)?;
    let per_group = group_auc(&scores, &labels, &groups)?;

    let mut features = Vec::with_capacity(examples.len());
    for example in examples {
        let (feat, _, _) = model.forward(&example.x)?;
        features.push((feat, example.b));
    }
    let probe_accuracy = bias_probe(&features, probe)?;

    Ok(EvalReport {
        overall_auc: overall,
        auc_per_group: per_group
            .per_group
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_f64_lossy()))
            .collect(),
        skipped_groups: per_group
            .skipped
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
        gap: per_group.gap.to_f64_lossy(),
        bias_probe_accuracy: probe_accuracy,
    })
}

/// Outcome of one generate → train → evaluate run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome<T> {
    pub outcome: TrainOutcome<T>,
    pub report: EvalReport,
}

/// Generates data from `spec`, trains `config.method`, and evaluates on
/// the test split. The probe inherits the training seed.
pub fn run_experiment<T: Real>(
    spec: &SyntheticBiasSpec,
    config: &TrainConfig,
    probe: &ProbeConfig,
) -> Result<ExperimentOutcome<T>, EvalError> {
    let data = gen_synthetic_biased::<T>(spec)?;
    let training = to_training_set(&data.train)?;
    let outcome = train(&training, config)?;
    let report = evaluate_model(&outcome.model, &data.test, probe)?;
    Ok(ExperimentOutcome { outcome, report })
}
