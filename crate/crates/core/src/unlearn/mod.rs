//! Bias-unlearning training at desk scale: a shared feature extractor with
//! a primary head and an adversarial bias head, hand-derived gradients,
//! heavy-ball SGD, and a finite-difference oracle over every method's
//! composite losses.

pub mod gradcheck;
mod linalg;
mod loss;
mod model;
mod train;

pub use linalg::Matrix;
pub use loss::{
    confusion_grad, confusion_loss, cross_entropy, cross_entropy_grad, grad_reverse,
    mean_confusion, mean_cross_entropy, mean_neg_entropy, neg_entropy, neg_entropy_grad, softmax,
    LossBreakdown,
};
pub use model::{
    FeatureExtractor, ForwardTrace, Head, HeadTrace, Linear, LogitGradients, Model, ModelDims,
};
pub use train::{
    argmax, train, Batch, Dataset, EpochStats, Method, TrainConfig, TrainOutcome, Trainer,
};

/// Errors from model construction and training.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("this method requires bias labels on every training example")]
    MissingBiasLabels,
    #[error("non-finite loss at step {step} in term {term}; aborting")]
    NonFinite { step: usize, term: &'static str },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
