//! Loss values and their logit gradients.
//!
//! Values and gradients are written as separate straight-line routines so
//! the finite-difference oracle can differentiate the value path without
//! touching the analytic one. Everything softmax-shaped is stabilised by
//! max subtraction.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

use super::linalg::Matrix;

/// Per-step scalar loss components. The bias cross-entropy is absent when
/// the batch carries no bias labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Primary-task cross-entropy.
    pub primary_ce: f64,
    /// Bias-head cross-entropy.
    pub bias_ce: Option<f64>,
    /// Cross-entropy from the uniform distribution to the bias posterior;
    /// never below `ln(n_bias_classes)`.
    pub confusion: f64,
    /// `sum_b p_b ln p_b` of the bias posterior, in `[-ln B, 0]`.
    pub neg_entropy: f64,
}

fn log_sum_exp<T: Real>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = logits.iter().map(|&z| (z - max).exp()).fold(T::zero(), |a, b| a + b);
    max + sum.ln()
}

/// Stabilised softmax of one logit row.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln softmax(logits)[label]`, computed as `lse(logits) - logits[label]`.
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> T {
    assert!(label < logits.len(), "label {label} out of range for width {}", logits.len());
    log_sum_exp(logits) - logits[label]
}

/// Cross-entropy between the uniform distribution over classes and the
/// softmax posterior: `lse(logits) - mean(logits)`. Minimised exactly at a
/// uniform posterior with value `ln(width)`.
pub fn confusion_loss<T: Real>(logits: &[T]) -> T {
    assert!(logits.len() >= 2, "confusion loss needs at least two classes");
    let mean = logits.iter().copied().fold(T::zero(), |a, b| a + b) / T::from_count(logits.len());
    log_sum_exp(logits) - mean
}

/// Negative entropy `sum_b p_b ln p_b` of the softmax posterior; `-ln B`
/// at uniform, approaching zero as the posterior peaks. Vanishing
/// probabilities contribute zero, their limit.
pub fn neg_entropy<T: Real>(logits: &[T]) -> T {
    assert!(logits.len() >= 2, "entropy needs at least two classes");
    softmax(logits)
        .into_iter()
        .map(|p| if p > T::zero() { p * p.ln() } else { T::zero() })
        .fold(T::zero(), |a, b| a + b)
}

/// The backward half of a gradient-reversal layer: identity forward,
/// `-lambda * grad` backward.
pub fn grad_reverse<T: Real>(upstream: &[T], lambda: T) -> Vec<T> {
    upstream.iter().map(|&g| -lambda * g).collect()
}

/// Batch-mean cross-entropy.
pub fn mean_cross_entropy<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> T {
    assert_eq!(logits.rows(), labels.len(), "label count mismatch");
    let total = logits
        .iter_rows()
        .zip(labels)
        .map(|(row, &label)| cross_entropy(row, label))
        .fold(T::zero(), |a, b| a + b);
    total / T::from_count(labels.len())
}

/// Batch-mean confusion loss.
pub fn mean_confusion<T: Real>(logits: &Matrix<T>) -> T {
    let total = logits.iter_rows().map(confusion_loss).fold(T::zero(), |a, b| a + b);
    total / T::from_count(logits.rows())
}

/// Batch-mean negative entropy.
pub fn mean_neg_entropy<T: Real>(logits: &Matrix<T>) -> T {
    let total = logits.iter_rows().map(neg_entropy).fold(T::zero(), |a, b| a + b);
    total / T::from_count(logits.rows())
}

/// d(mean cross-entropy)/d(logits): `(softmax - onehot) / n`.
pub fn cross_entropy_grad<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> Matrix<T> {
    assert_eq!(logits.rows(), labels.len(), "label count mismatch");
    let inv_n = T::one() / T::from_count(logits.rows());
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for (r, &label) in labels.iter().enumerate() {
        let p = softmax(logits.row(r));
        let row = out.row_mut(r);
        for (c, &pc) in p.iter().enumerate() {
            let indicator = if c == label { T::one() } else { T::zero() };
            row[c] = (pc - indicator) * inv_n;
        }
    }
    out
}

/// d(mean confusion)/d(logits): `(softmax - 1/B) / n`.
pub fn confusion_grad<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let inv_n = T::one() / T::from_count(logits.rows());
    let uniform = T::one() / T::from_count(logits.cols());
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let p = softmax(logits.row(r));
        let row = out.row_mut(r);
        for (c, &pc) in p.iter().enumerate() {
            row[c] = (pc - uniform) * inv_n;
        }
    }
    out
}

/// d(mean negative entropy)/d(logits): `p_j (ln p_j - S) / n` per row,
/// where `S` is that row's negative entropy.
pub fn neg_entropy_grad<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let inv_n = T::one() / T::from_count(logits.rows());
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let p = softmax(logits.row(r));
        let s = p
            .iter()
            .map(|&q| if q > T::zero() { q * q.ln() } else { T::zero() })
            .fold(T::zero(), |a, b| a + b);
        let row = out.row_mut(r);
        for (c, &pc) in p.iter().enumerate() {
            row[c] = if pc > T::zero() { pc * (pc.ln() - s) * inv_n } else { T::zero() };
        }
    }
    out
}
