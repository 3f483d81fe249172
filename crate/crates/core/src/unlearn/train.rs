//! SGD training loops for the baseline and the three unlearning methods.
//!
//! All three unlearning methods share the same network and differ only in
//! how loss gradients are routed:
//!
//! * `lntl` — one simultaneous step: the bias head `h` descends its
//!   cross-entropy while the extractor `f` receives the primary gradient,
//!   an entropy regulariser pushing the bias posterior toward uniform, and
//!   the gradient-reversed bias cross-entropy.
//! * `tabe` — two sub-steps per batch: first only `h` descends its
//!   cross-entropy, then `f` and `g` descend the primary loss plus a
//!   confusion loss toward a uniform bias posterior with `h` frozen.
//! * `clgr` — `tabe` with the gradient-reversed bias cross-entropy added
//!   to the second sub-step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

use super::linalg::Matrix;
use super::loss::{
    confusion_grad, cross_entropy_grad, grad_reverse, mean_confusion, mean_cross_entropy,
    mean_neg_entropy, neg_entropy_grad, LossBreakdown,
};
use super::model::{LogitGradients, Model, ModelDims};
use super::TrainError;

/// Which training procedure to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Primary head only; the bias head stays at initialisation.
    Baseline,
    /// Gradient reversal plus negative-entropy regularisation, single step.
    Lntl,
    /// Alternating bias-head step and confusion-regularised primary step.
    Tabe,
    /// `Tabe` with gradient reversal added to the primary step.
    Clgr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::Lntl, Method::Tabe, Method::Clgr];

    pub fn needs_bias_labels(self) -> bool {
        self != Method::Baseline
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Lntl => "lntl",
            Method::Tabe => "tabe",
            Method::Clgr => "clgr",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "lntl" => Ok(Method::Lntl),
            "tabe" => Ok(Method::Tabe),
            "clgr" => Ok(Method::Clgr),
            other => Err(format!(
                "unknown method '{other}' (expected baseline, lntl, tabe or clgr)"
            )),
        }
    }
}

/// Hyperparameters. Everything is config-exposed; the defaults are sane
/// starting points for the synthetic benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Gradient-reversal scale λ (lntl/clgr).
    pub gr_lambda: f64,
    /// Negative-entropy regulariser weight μ (lntl).
    pub reg_mu: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    /// Feature embedding width K.
    pub feature_dim: usize,
    /// Fully connected layers per head, 1 or 2.
    pub head_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // momentum defaults to zero: the adversarial methods oscillate
        // into NaN under heavy-ball momentum at any workable rate
        Self {
            method: Method::Baseline,
            learning_rate: 0.01,
            momentum: 0.0,
            gr_lambda: 1.0,
            reg_mu: 0.01,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            hidden_dim: 16,
            feature_dim: 8,
            head_depth: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.gr_lambda < 0.0 || self.reg_mu < 0.0 {
            return Err(TrainError::InvalidConfig(
                "gr_lambda and reg_mu must be non-negative".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// An in-memory training set.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub inputs: Matrix<T>,
    pub primary_labels: Vec<usize>,
    pub bias_labels: Option<Vec<usize>>,
    pub n_primary_classes: usize,
    pub n_bias_classes: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        inputs: Matrix<T>,
        primary_labels: Vec<usize>,
        bias_labels: Option<Vec<usize>>,
        n_primary_classes: usize,
        n_bias_classes: usize,
    ) -> Result<Self, TrainError> {
        if inputs.rows() == 0 {
            return Err(TrainError::EmptyDataset);
        }
        if primary_labels.len() != inputs.rows() {
            return Err(TrainError::ShapeMismatch {
                expected: inputs.rows(),
                actual: primary_labels.len(),
            });
        }
        if primary_labels.iter().any(|&y| y >= n_primary_classes) {
            return Err(TrainError::InvalidConfig("primary label out of range".into()));
        }
        if let Some(bias) = &bias_labels {
            if bias.len() != inputs.rows() {
                return Err(TrainError::ShapeMismatch {
                    expected: inputs.rows(),
                    actual: bias.len(),
                });
            }
            if bias.iter().any(|&b| b >= n_bias_classes) {
                return Err(TrainError::InvalidConfig("bias label out of range".into()));
            }
        }
        Ok(Self { inputs, primary_labels, bias_labels, n_primary_classes, n_bias_classes })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(&self, indices: &[usize]) -> Batch<T> {
        let inputs = Matrix::from_fn(indices.len(), self.inputs.cols(), |r, c| {
            self.inputs.get(indices[r], c)
        });
        Batch {
            inputs,
            primary_labels: indices.iter().map(|&i| self.primary_labels[i]).collect(),
            bias_labels: self
                .bias_labels
                .as_ref()
                .map(|b| indices.iter().map(|&i| b[i]).collect()),
        }
    }
}

/// One minibatch view.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub inputs: Matrix<T>,
    pub primary_labels: Vec<usize>,
    pub bias_labels: Option<Vec<usize>>,
}

impl<T: Real> Batch<T> {
    fn bias(&self) -> Result<&[usize], TrainError> {
        self.bias_labels.as_deref().ok_or(TrainError::MissingBiasLabels)
    }
}

/// Model plus optimiser state; one `step` per minibatch.
pub struct Trainer<T> {
    pub model: Model<T>,
    velocity: Vec<T>,
    lr: T,
    momentum: T,
    lambda: T,
    mu: T,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: Model<T>, config: &TrainConfig) -> Self {
        let velocity = vec![T::zero(); model.param_count()];
        Self {
            model,
            velocity,
            lr: T::c(config.learning_rate),
            momentum: T::c(config.momentum),
            lambda: T::c(config.gr_lambda),
            mu: T::c(config.reg_mu),
        }
    }

    /// Heavy-ball SGD over selected parameter spans only; velocities of
    /// untouched spans stay put.
    fn apply_sgd(&mut self, grads: &[T], spans: &[std::ops::Range<usize>]) {
        let mut params = self.model.flatten_params();
        for span in spans {
            for i in span.clone() {
                self.velocity[i] = self.momentum * self.velocity[i] + grads[i];
                params[i] -= self.lr * self.velocity[i];
            }
        }
        self.model
            .load_params(&params)
            .expect("flat layout matches the model it came from");
    }

    fn measure(&self, batch: &Batch<T>) -> Result<(super::model::ForwardTrace<T>, LossBreakdown), TrainError> {
        let trace = self.model.forward_batch(&batch.inputs)?;
        let breakdown = LossBreakdown {
            primary_ce: mean_cross_entropy(&trace.primary.logits, &batch.primary_labels)
                .to_f64_lossy(),
            bias_ce: batch
                .bias_labels
                .as_ref()
                .map(|b| mean_cross_entropy(&trace.bias.logits, b).to_f64_lossy()),
            confusion: mean_confusion(&trace.bias.logits).to_f64_lossy(),
            neg_entropy: mean_neg_entropy(&trace.bias.logits).to_f64_lossy(),
        };
        Ok((trace, breakdown))
    }

    /// One update on the primary loss only; the bias head never moves.
    pub fn baseline_step(&mut self, batch: &Batch<T>) -> Result<LossBreakdown, TrainError> {
        let (trace, breakdown) = self.measure(batch)?;
        let upstream = LogitGradients {
            primary: Some(cross_entropy_grad(&trace.primary.logits, &batch.primary_labels)),
            ..LogitGradients::default()
        };
        let grads = self.model.backward_batch(&batch.inputs, &trace, &upstream)?;
        let spans = [self.model.extractor_span(), self.model.primary_span()];
        self.apply_sgd(&grads, &spans);
        Ok(breakdown)
    }

    /// One simultaneous minimax update: `h` descends the bias
    /// cross-entropy; `f` descends the primary loss plus `mu` times the
    /// negative entropy of the bias posterior, plus the gradient-reversed
    /// bias cross-entropy scaled by `lambda`; `g` descends the primary
    /// loss.
    pub fn lntl_step(&mut self, batch: &Batch<T>) -> Result<LossBreakdown, TrainError> {
        let bias_labels = batch.bias()?.to_vec();
        let (trace, breakdown) = self.measure(batch)?;
        let d_bias_ce = cross_entropy_grad(&trace.bias.logits, &bias_labels);

        let mut bias_feature: Option<Matrix<T>> = None;
        if self.mu > T::zero() {
            let mut m = neg_entropy_grad(&trace.bias.logits);
            for v in m.data_mut() {
                *v *= self.mu;
            }
            bias_feature = Some(m);
        }
        if self.lambda > T::zero() {
            let mut reversed = d_bias_ce.clone();
            for r in 0..reversed.rows() {
                let row = grad_reverse(d_bias_ce.row(r), self.lambda);
                reversed.row_mut(r).copy_from_slice(&row);
            }
            match &mut bias_feature {
                Some(m) => m.add_scaled(&reversed, T::one()),
                None => bias_feature = Some(reversed),
            }
        }

        let upstream = LogitGradients {
            primary: Some(cross_entropy_grad(&trace.primary.logits, &batch.primary_labels)),
            bias_head: Some(d_bias_ce),
            bias_feature,
        };
        let grads = self.model.backward_batch(&batch.inputs, &trace, &upstream)?;
        let spans =
            [self.model.extractor_span(), self.model.primary_span(), self.model.bias_span()];
        self.apply_sgd(&grads, &spans);
        Ok(breakdown)
    }

    /// Two sub-steps: (1) only the bias head descends its cross-entropy;
    /// (2) extractor and primary head descend the primary loss plus the
    /// confusion loss, bias head frozen. `reversal` additionally feeds the
    /// gradient-reversed bias cross-entropy into the extractor in (2).
    fn alternating_step(
        &mut self,
        batch: &Batch<T>,
        reversal: bool,
    ) -> Result<LossBreakdown, TrainError> {
        let bias_labels = batch.bias()?.to_vec();

        // phase 1: bias head alone
        let trace = self.model.forward_batch(&batch.inputs)?;
        let upstream = LogitGradients {
            bias_head: Some(cross_entropy_grad(&trace.bias.logits, &bias_labels)),
            ..LogitGradients::default()
        };
        let grads = self.model.backward_batch(&batch.inputs, &trace, &upstream)?;
        self.apply_sgd(&grads, &[self.model.bias_span()]);

        // phase 2: extractor and primary head against the updated head
        let (trace, breakdown) = self.measure(batch)?;
        let mut bias_feature = confusion_grad(&trace.bias.logits);
        if reversal && self.lambda > T::zero() {
            let d_bias_ce = cross_entropy_grad(&trace.bias.logits, &bias_labels);
            for r in 0..bias_feature.rows() {
                let reversed = grad_reverse(d_bias_ce.row(r), self.lambda);
                for (acc, v) in bias_feature.row_mut(r).iter_mut().zip(reversed) {
                    *acc += v;
                }
            }
        }
        let upstream = LogitGradients {
            primary: Some(cross_entropy_grad(&trace.primary.logits, &batch.primary_labels)),
            bias_feature: Some(bias_feature),
            ..LogitGradients::default()
        };
        let grads = self.model.backward_batch(&batch.inputs, &trace, &upstream)?;
        let spans = [self.model.extractor_span(), self.model.primary_span()];
        self.apply_sgd(&grads, &spans);
        Ok(breakdown)
    }

    pub fn tabe_step(&mut self, batch: &Batch<T>) -> Result<LossBreakdown, TrainError> {
        self.alternating_step(batch, false)
    }

    pub fn clgr_step(&mut self, batch: &Batch<T>) -> Result<LossBreakdown, TrainError> {
        self.alternating_step(batch, true)
    }

    pub fn step(&mut self, method: Method, batch: &Batch<T>) -> Result<LossBreakdown, TrainError> {
        match method {
            Method::Baseline => self.baseline_step(batch),
            Method::Lntl => self.lntl_step(batch),
            Method::Tabe => self.tabe_step(batch),
            Method::Clgr => self.clgr_step(batch),
        }
    }
}

/// Per-epoch aggregates: mean loss components over the epoch's steps plus
/// full-dataset accuracies measured after the epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub primary_accuracy: f64,
    pub bias_accuracy: Option<f64>,
}

/// A trained model with its epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub history: Vec<EpochStats>,
}

fn check_finite(step: usize, loss: &LossBreakdown) -> Result<(), TrainError> {
    let terms = [
        ("primary_ce", Some(loss.primary_ce)),
        ("bias_ce", loss.bias_ce),
        ("confusion", Some(loss.confusion)),
        ("neg_entropy", Some(loss.neg_entropy)),
    ];
    for (term, value) in terms {
        if let Some(v) = value {
            if !v.is_finite() {
                return Err(TrainError::NonFinite { step, term });
            }
        }
    }
    Ok(())
}

/// Argmax with ties resolved to the first index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

fn accuracy<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> f64 {
    let hits = logits
        .iter_rows()
        .zip(labels)
        .filter(|(row, &label)| argmax(row) == label)
        .count();
    hits as f64 / labels.len() as f64
}

/// Trains `config.method` on the dataset. Fully deterministic given the
/// seed: initialisation and the per-epoch shuffle all flow from one
/// `ChaCha8` stream. A non-finite loss aborts with the step and term.
pub fn train<T: Real>(dataset: &Dataset<T>, config: &TrainConfig) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if config.method.needs_bias_labels() && dataset.bias_labels.is_none() {
        return Err(TrainError::MissingBiasLabels);
    }
    let dims = ModelDims {
        input_dim: dataset.inputs.cols(),
        hidden_dim: config.hidden_dim,
        feature_dim: config.feature_dim,
        n_primary_classes: dataset.n_primary_classes,
        n_bias_classes: dataset.n_bias_classes,
        head_depth: config.head_depth,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = Model::init(dims, &mut rng)?;
    let mut trainer = Trainer::new(model, config);

    let mut history = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut global_step = 0usize;
    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut sums = (0.0f64, Option::<f64>::None, 0.0f64, 0.0f64);
        let mut steps = 0usize;
        for chunk in indices.chunks(config.batch_size) {
            let batch = dataset.gather(chunk);
            let loss = trainer.step(config.method, &batch)?;
            check_finite(global_step, &loss)?;
            sums.0 += loss.primary_ce;
            if let Some(b) = loss.bias_ce {
                *sums.1.get_or_insert(0.0) += b;
            }
            sums.2 += loss.confusion;
            sums.3 += loss.neg_entropy;
            steps += 1;
            global_step += 1;
        }
        let n = steps as f64;
        let trace = trainer.model.forward_batch(&dataset.inputs)?;
        history.push(EpochStats {
            epoch,
            loss: LossBreakdown {
                primary_ce: sums.0 / n,
                bias_ce: sums.1.map(|b| b / n),
                confusion: sums.2 / n,
                neg_entropy: sums.3 / n,
            },
            primary_accuracy: accuracy(&trace.primary.logits, &dataset.primary_labels),
            bias_accuracy: dataset
                .bias_labels
                .as_ref()
                .map(|b| accuracy(&trace.bias.logits, b)),
        });
    }
    Ok(TrainOutcome { model: trainer.model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unlearn::loss::{confusion_grad, cross_entropy_grad};
    use crate::unlearn::model::{FeatureExtractor, Head, Linear, LogitGradients};
    use rand::Rng;

    fn toy_dataset(seed: u64, n: usize) -> Dataset<f64> {
        // two Gaussian-ish blobs, bias label flips with the class mostly
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = Matrix::from_fn(n, 2, |r, c| {
            let y = r % 2;
            let centre = if y == 1 { 2.0 } else { -2.0 };
            let jitter = rng.random::<f64>() - 0.5;
            if c == 0 {
                centre + jitter
            } else {
                jitter * 2.0
            }
        });
        let primary: Vec<usize> = (0..n).map(|r| r % 2).collect();
        let bias: Vec<usize> = (0..n).map(|r| (r / 2) % 2).collect();
        Dataset::new(inputs, primary, Some(bias), 2, 2).unwrap()
    }

    fn config(method: Method) -> TrainConfig {
        TrainConfig {
            method,
            epochs: 3,
            batch_size: 8,
            hidden_dim: 6,
            feature_dim: 4,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn init_model(cfg: &TrainConfig, dataset: &Dataset<f64>) -> Model<f64> {
        let dims = ModelDims {
            input_dim: dataset.inputs.cols(),
            hidden_dim: cfg.hidden_dim,
            feature_dim: cfg.feature_dim,
            n_primary_classes: 2,
            n_bias_classes: 2,
            head_depth: cfg.head_depth,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Model::init(dims, &mut rng).unwrap()
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let dataset = toy_dataset(1, 16);
        let cfg = TrainConfig { learning_rate: 0.0, ..config(Method::Lntl) };
        let model = init_model(&cfg, &dataset);
        let before = model.flatten_params();
        let mut trainer = Trainer::new(model, &cfg);
        let batch = dataset.gather(&(0..16).collect::<Vec<_>>());
        trainer.lntl_step(&batch).unwrap();
        assert_eq!(trainer.model.flatten_params(), before);
    }

    #[test]
    fn first_baseline_step_is_lr_times_gradient() {
        // zero-weight model: only the primary head bias receives gradient,
        // (softmax(0) - onehot) averaged over the batch, so the update is
        // hand-computable
        let dims = ModelDims {
            input_dim: 1,
            hidden_dim: 1,
            feature_dim: 1,
            n_primary_classes: 2,
            n_bias_classes: 2,
            head_depth: 1,
        };
        let model = Model {
            dims,
            extractor: FeatureExtractor {
                hidden: Linear::zeros(1, 1),
                output: Linear::zeros(1, 1),
            },
            primary_head: Head { layers: vec![Linear::zeros(2, 1)] },
            bias_head: Head { layers: vec![Linear::zeros(2, 1)] },
        };
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            ..config(Method::Baseline)
        };
        let mut trainer = Trainer::new(model, &cfg);
        let batch = Batch {
            inputs: Matrix::from_rows(vec![vec![1.0f64]]),
            primary_labels: vec![0],
            bias_labels: None,
        };
        trainer.baseline_step(&batch).unwrap();
        let bias = &trainer.model.primary_head.layers[0].bias;
        // grad = softmax([0,0]) - onehot(0) = [-0.5, 0.5]; update = -lr * grad
        assert!((bias[0] - 0.05).abs() < 1e-12);
        assert!((bias[1] + 0.05).abs() < 1e-12);
    }

    #[test]
    fn lntl_with_zero_scales_tracks_baseline_for_f_and_g() {
        let dataset = toy_dataset(2, 32);
        let cfg_base = config(Method::Baseline);
        let cfg_lntl = TrainConfig {
            gr_lambda: 0.0,
            reg_mu: 0.0,
            ..config(Method::Lntl)
        };
        let mut base = Trainer::new(init_model(&cfg_base, &dataset), &cfg_base);
        let mut lntl = Trainer::new(init_model(&cfg_lntl, &dataset), &cfg_lntl);
        assert_eq!(base.model, lntl.model);

        let all: Vec<usize> = (0..dataset.len()).collect();
        for chunk in all.chunks(8) {
            let batch = dataset.gather(chunk);
            base.baseline_step(&batch).unwrap();
            lntl.lntl_step(&batch).unwrap();
        }
        let pb = base.model.flatten_params();
        let pl = lntl.model.flatten_params();
        let f = base.model.extractor_span();
        let g = base.model.primary_span();
        assert_eq!(pb[f.clone()], pl[f]);
        assert_eq!(pb[g.clone()], pl[g]);
        // the bias head trained only under lntl
        let h = base.model.bias_span();
        assert_ne!(pb[h.clone()], pl[h]);
    }

    #[test]
    fn uniform_posterior_has_stationary_regularisers() {
        // zero weights: bias logits are zero, the posterior is uniform,
        // and both the confusion and entropy gradients vanish exactly
        let logits = Matrix::<f64>::zeros(4, 2);
        assert!(confusion_grad(&logits).data().iter().all(|&v| v == 0.0));
        assert!(
            super::super::loss::neg_entropy_grad(&logits).data().iter().all(|&v| v == 0.0)
        );
    }

    #[test]
    fn separable_optimum_has_negligible_gradient() {
        // huge-margin correct logits: softmax saturates to the one-hot
        // labels and every gradient underflows to zero
        let dims = ModelDims {
            input_dim: 1,
            hidden_dim: 1,
            feature_dim: 1,
            n_primary_classes: 2,
            n_bias_classes: 2,
            head_depth: 1,
        };
        let model = Model {
            dims,
            extractor: FeatureExtractor {
                hidden: Linear { weight: Matrix::from_rows(vec![vec![1.0]]), bias: vec![1.0] },
                output: Linear { weight: Matrix::from_rows(vec![vec![1.0]]), bias: vec![0.0] },
            },
            primary_head: Head {
                layers: vec![Linear {
                    weight: Matrix::from_rows(vec![vec![-1000.0], vec![1000.0]]),
                    bias: vec![0.0, 0.0],
                }],
            },
            bias_head: Head { layers: vec![Linear::zeros(2, 1)] },
        };
        let batch = Batch {
            inputs: Matrix::from_rows(vec![vec![0.5f64], vec![1.5]]),
            primary_labels: vec![1, 1],
            bias_labels: None,
        };
        let trace = model.forward_batch(&batch.inputs).unwrap();
        let upstream = LogitGradients {
            primary: Some(cross_entropy_grad(&trace.primary.logits, &batch.primary_labels)),
            ..LogitGradients::default()
        };
        let grads = model.backward_batch(&batch.inputs, &trace, &upstream).unwrap();
        let norm: f64 = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm {norm} at the optimum");
    }

    #[test]
    fn tabe_step_matches_manual_two_phase_update() {
        let dataset = toy_dataset(3, 16);
        let cfg = config(Method::Tabe);
        let model = init_model(&cfg, &dataset);
        let batch = dataset.gather(&(0..16).collect::<Vec<_>>());

        // manual phase 1: only the bias head moves on its cross-entropy
        let lr = cfg.learning_rate;
        let mut manual = model.clone();
        let trace = manual.forward_batch(&batch.inputs).unwrap();
        let upstream = LogitGradients {
            bias_head: Some(cross_entropy_grad(
                &trace.bias.logits,
                batch.bias_labels.as_ref().unwrap(),
            )),
            ..LogitGradients::default()
        };
        let grads = manual.backward_batch(&batch.inputs, &trace, &upstream).unwrap();
        let mut params = manual.flatten_params();
        for i in manual.bias_span() {
            params[i] -= lr * grads[i];
        }
        manual.load_params(&params).unwrap();

        // manual phase 2: extractor and primary head move on L_p + L_conf
        let trace = manual.forward_batch(&batch.inputs).unwrap();
        let upstream = LogitGradients {
            primary: Some(cross_entropy_grad(&trace.primary.logits, &batch.primary_labels)),
            bias_feature: Some(confusion_grad(&trace.bias.logits)),
            ..LogitGradients::default()
        };
        let grads = manual.backward_batch(&batch.inputs, &trace, &upstream).unwrap();
        let mut params = manual.flatten_params();
        for i in manual.extractor_span().chain(manual.primary_span()) {
            params[i] -= lr * grads[i];
        }
        manual.load_params(&params).unwrap();

        let mut trainer = Trainer::new(model, &cfg);
        trainer.tabe_step(&batch).unwrap();
        let got = trainer.model.flatten_params();
        let want = manual.flatten_params();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn tabe_phase_one_respects_bias_head_optimum() {
        // bias head already classifies the batch with huge margins: its
        // gradient underflows to zero and phase 1 leaves it untouched
        let dims = ModelDims {
            input_dim: 1,
            hidden_dim: 1,
            feature_dim: 1,
            n_primary_classes: 2,
            n_bias_classes: 2,
            head_depth: 1,
        };
        let model = Model {
            dims,
            extractor: FeatureExtractor {
                hidden: Linear { weight: Matrix::from_rows(vec![vec![1.0]]), bias: vec![0.5] },
                output: Linear { weight: Matrix::from_rows(vec![vec![1.0]]), bias: vec![0.5] },
            },
            primary_head: Head { layers: vec![Linear::zeros(2, 1)] },
            bias_head: Head {
                layers: vec![Linear {
                    weight: Matrix::from_rows(vec![vec![-1000.0], vec![1000.0]]),
                    bias: vec![0.0, 0.0],
                }],
            },
        };
        let cfg = config(Method::Tabe);
        let before = model.flatten_params();
        let bias_span = model.bias_span();
        let mut trainer = Trainer::new(model, &cfg);
        let batch = Batch {
            inputs: Matrix::from_rows(vec![vec![0.5f64], vec![1.0]]),
            primary_labels: vec![0, 1],
            bias_labels: Some(vec![1, 1]),
        };
        trainer.tabe_step(&batch).unwrap();
        let after = trainer.model.flatten_params();
        for i in bias_span {
            assert!((after[i] - before[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn clgr_with_zero_lambda_matches_tabe_exactly() {
        let dataset = toy_dataset(4, 24);
        let cfg_tabe = config(Method::Tabe);
        let cfg_clgr = TrainConfig { gr_lambda: 0.0, ..config(Method::Clgr) };
        let mut tabe = Trainer::new(init_model(&cfg_tabe, &dataset), &cfg_tabe);
        let mut clgr = Trainer::new(init_model(&cfg_clgr, &dataset), &cfg_clgr);
        let all: Vec<usize> = (0..dataset.len()).collect();
        for chunk in all.chunks(8) {
            let batch = dataset.gather(chunk);
            tabe.tabe_step(&batch).unwrap();
            clgr.clgr_step(&batch).unwrap();
        }
        assert_eq!(tabe.model, clgr.model);
    }

    #[test]
    fn gradient_reversal_negates_the_feature_path() {
        let dataset = toy_dataset(5, 8);
        let cfg = config(Method::Lntl);
        let model = init_model(&cfg, &dataset);
        let batch = dataset.gather(&(0..8).collect::<Vec<_>>());
        let trace = model.forward_batch(&batch.inputs).unwrap();
        let d_bias = cross_entropy_grad(&trace.bias.logits, batch.bias_labels.as_ref().unwrap());

        let plain = model
            .backward_batch(
                &batch.inputs,
                &trace,
                &LogitGradients { bias_feature: Some(d_bias.clone()), ..Default::default() },
            )
            .unwrap();
        let mut reversed_logits = d_bias.clone();
        for r in 0..reversed_logits.rows() {
            let row = crate::unlearn::loss::grad_reverse(d_bias.row(r), 1.0);
            reversed_logits.row_mut(r).copy_from_slice(&row);
        }
        let reversed = model
            .backward_batch(
                &batch.inputs,
                &trace,
                &LogitGradients { bias_feature: Some(reversed_logits), ..Default::default() },
            )
            .unwrap();
        for i in model.extractor_span() {
            assert!((plain[i] + reversed[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_bias_labels_is_an_error() {
        let mut dataset = toy_dataset(6, 16);
        dataset.bias_labels = None;
        for method in [Method::Lntl, Method::Tabe, Method::Clgr] {
            let cfg = config(method);
            assert_eq!(train(&dataset, &cfg).unwrap_err(), TrainError::MissingBiasLabels);
        }
        assert!(train(&dataset, &config(Method::Baseline)).is_ok());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let dataset = toy_dataset(7, 48);
        for method in Method::ALL {
            let cfg = config(method);
            let a = train(&dataset, &cfg).unwrap();
            let b = train(&dataset, &cfg).unwrap();
            assert_eq!(a.model, b.model, "{method} models diverged");
            assert_eq!(a.history, b.history, "{method} histories diverged");
            assert_eq!(a.history.len(), cfg.epochs);
        }
    }

    #[test]
    fn zero_epochs_returns_seeded_initialisation() {
        let dataset = toy_dataset(8, 16);
        let cfg = TrainConfig { epochs: 0, ..config(Method::Clgr) };
        let outcome = train(&dataset, &cfg).unwrap();
        assert!(outcome.history.is_empty());
        assert_eq!(outcome.model, init_model(&cfg, &dataset));
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        let dataset = toy_dataset(9, 60);
        let cfg = TrainConfig { epochs: 200, batch_size: 16, ..config(Method::Baseline) };
        let outcome = train(&dataset, &cfg).unwrap();
        let last = outcome.history.last().unwrap();
        assert!(
            last.primary_accuracy >= 0.99,
            "separable blobs reached only {}",
            last.primary_accuracy
        );
    }

    #[test]
    fn exploding_run_aborts_with_step_and_term() {
        let dataset = toy_dataset(10, 32);
        let cfg = TrainConfig { learning_rate: 1e12, epochs: 5, ..config(Method::Lntl) };
        match train(&dataset, &cfg) {
            Err(TrainError::NonFinite { step, term }) => {
                assert!(step > 0);
                assert!(!term.is_empty());
            }
            other => panic!("expected NonFinite abort, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let dataset = toy_dataset(11, 8);
        let bad_lr = TrainConfig { learning_rate: 0.0, ..config(Method::Baseline) };
        assert!(matches!(train(&dataset, &bad_lr), Err(TrainError::InvalidConfig(_))));
        let bad_depth = TrainConfig { head_depth: 3, ..config(Method::Baseline) };
        assert!(matches!(train(&dataset, &bad_depth), Err(TrainError::InvalidConfig(_))));
        let bad_batch = TrainConfig { batch_size: 0, ..config(Method::Baseline) };
        assert!(matches!(train(&dataset, &bad_batch), Err(TrainError::InvalidConfig(_))));
    }
}
