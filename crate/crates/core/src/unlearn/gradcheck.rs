//! Central finite-difference oracle for every method's composite losses.
//!
//! Each parameter group descends a well-defined scalar (for example the
//! extractor under `clgr` descends `L_p + L_conf - lambda * L_s`), so the
//! analytic gradient of that group can be checked against central
//! differences of the scalar, evaluated through the value-only loss path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

use super::linalg::Matrix;
use super::loss::{
    confusion_grad, cross_entropy_grad, grad_reverse, mean_confusion, mean_cross_entropy,
    mean_neg_entropy, neg_entropy_grad,
};
use super::model::{LogitGradients, Model, ModelDims};
use super::train::{Batch, Method};
use super::TrainError;

/// Result of checking one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodGradCheck {
    pub method: Method,
    /// Worst guarded relative error over every parameter.
    pub max_rel_err: f64,
    /// Parameters compared.
    pub checked: usize,
}

/// Loss-term weights defining one parameter group's scalar objective.
#[derive(Debug, Clone, Copy)]
struct TermWeights {
    primary_ce: f64,
    bias_ce: f64,
    confusion: f64,
    neg_entropy: f64,
}

fn scalar_loss<T: Real>(model: &Model<T>, batch: &Batch<T>, w: TermWeights) -> Result<T, TrainError> {
    let trace = model.forward_batch(&batch.inputs)?;
    let bias_labels = batch.bias_labels.as_deref();
    let mut total = T::zero();
    if w.primary_ce != 0.0 {
        total += T::c(w.primary_ce)
            * mean_cross_entropy(&trace.primary.logits, &batch.primary_labels);
    }
    if w.bias_ce != 0.0 {
        let labels = bias_labels.ok_or(TrainError::MissingBiasLabels)?;
        total += T::c(w.bias_ce) * mean_cross_entropy(&trace.bias.logits, labels);
    }
    if w.confusion != 0.0 {
        total += T::c(w.confusion) * mean_confusion(&trace.bias.logits);
    }
    if w.neg_entropy != 0.0 {
        total += T::c(w.neg_entropy) * mean_neg_entropy(&trace.bias.logits);
    }
    Ok(total)
}

/// The analytic flat gradient a method routes on one batch, exactly as the
/// training steps route it (evaluated at the current parameters, before
/// any update).
fn analytic_gradient<T: Real>(
    model: &Model<T>,
    batch: &Batch<T>,
    method: Method,
    lambda: f64,
    mu: f64,
) -> Result<Vec<T>, TrainError> {
    let trace = model.forward_batch(&batch.inputs)?;
    let d_primary = cross_entropy_grad(&trace.primary.logits, &batch.primary_labels);
    let upstream = match method {
        Method::Baseline => LogitGradients { primary: Some(d_primary), ..Default::default() },
        Method::Lntl => {
            let labels = batch.bias_labels.as_deref().ok_or(TrainError::MissingBiasLabels)?;
            let d_bias = cross_entropy_grad(&trace.bias.logits, labels);
            let mut feature = neg_entropy_grad(&trace.bias.logits);
            for v in feature.data_mut() {
                *v *= T::c(mu);
            }
            add_reversed(&mut feature, &d_bias, T::c(lambda));
            LogitGradients {
                primary: Some(d_primary),
                bias_head: Some(d_bias),
                bias_feature: Some(feature),
            }
        }
        Method::Tabe | Method::Clgr => {
            let labels = batch.bias_labels.as_deref().ok_or(TrainError::MissingBiasLabels)?;
            let d_bias = cross_entropy_grad(&trace.bias.logits, labels);
            let mut feature = confusion_grad(&trace.bias.logits);
            if method == Method::Clgr {
                add_reversed(&mut feature, &d_bias, T::c(lambda));
            }
            LogitGradients {
                primary: Some(d_primary),
                bias_head: Some(d_bias),
                bias_feature: Some(feature),
            }
        }
    };
    model.backward_batch(&batch.inputs, &trace, &upstream)
}

fn add_reversed<T: Real>(acc: &mut Matrix<T>, grad: &Matrix<T>, lambda: T) {
    if lambda == T::zero() {
        return;
    }
    for r in 0..acc.rows() {
        let reversed = grad_reverse(grad.row(r), lambda);
        for (a, v) in acc.row_mut(r).iter_mut().zip(reversed) {
            *a += v;
        }
    }
}

/// Guarded relative error; the floor keeps finite-difference noise on
/// near-zero gradients from dividing by nothing.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Checks one method's analytic gradients against central differences on
/// the given model and batch. `fd_step` is the half-step of the central
/// difference.
pub fn check_method<T: Real>(
    model: &Model<T>,
    batch: &Batch<T>,
    method: Method,
    lambda: f64,
    mu: f64,
    fd_step: f64,
) -> Result<MethodGradCheck, TrainError> {
    let primary_only = TermWeights { primary_ce: 1.0, bias_ce: 0.0, confusion: 0.0, neg_entropy: 0.0 };
    let bias_only = TermWeights { primary_ce: 0.0, bias_ce: 1.0, confusion: 0.0, neg_entropy: 0.0 };
    let groups: Vec<(std::ops::Range<usize>, TermWeights)> = match method {
        Method::Baseline => vec![
            (model.extractor_span(), primary_only),
            (model.primary_span(), primary_only),
        ],
        Method::Lntl => vec![
            (
                model.extractor_span(),
                TermWeights { primary_ce: 1.0, bias_ce: -lambda, confusion: 0.0, neg_entropy: mu },
            ),
            (model.primary_span(), primary_only),
            (model.bias_span(), bias_only),
        ],
        Method::Tabe => vec![
            (
                model.extractor_span(),
                TermWeights { primary_ce: 1.0, bias_ce: 0.0, confusion: 1.0, neg_entropy: 0.0 },
            ),
            (
                model.primary_span(),
                TermWeights { primary_ce: 1.0, bias_ce: 0.0, confusion: 1.0, neg_entropy: 0.0 },
            ),
            (model.bias_span(), bias_only),
        ],
        Method::Clgr => vec![
            (
                model.extractor_span(),
                TermWeights { primary_ce: 1.0, bias_ce: -lambda, confusion: 1.0, neg_entropy: 0.0 },
            ),
            (
                model.primary_span(),
                TermWeights { primary_ce: 1.0, bias_ce: 0.0, confusion: 1.0, neg_entropy: 0.0 },
            ),
            (model.bias_span(), bias_only),
        ],
    };

    let analytic = analytic_gradient(model, batch, method, lambda, mu)?;
    let base_params = model.flatten_params();
    let mut probe = model.clone();
    let mut max_err = 0.0f64;
    let mut checked = 0usize;
    for (span, weights) in groups {
        for i in span {
            let mut params = base_params.clone();
            params[i] += T::c(fd_step);
            probe.load_params(&params)?;
            let plus = scalar_loss(&probe, batch, weights)?.to_f64_lossy();
            params[i] = base_params[i] - T::c(fd_step);
            probe.load_params(&params)?;
            let minus = scalar_loss(&probe, batch, weights)?.to_f64_lossy();
            let numeric = (plus - minus) / (2.0 * fd_step);
            max_err = max_err.max(rel_err(analytic[i].to_f64_lossy(), numeric));
            checked += 1;
        }
    }
    Ok(MethodGradCheck { method, max_rel_err: max_err, checked })
}

/// The standard check: a seeded 2-input / 4-hidden / K=4 model with two
/// primary and two bias classes, one random batch of 8, default scales
/// `lambda = 1`, `mu = 0.01`, central differences with step `1e-5`.
pub fn run_standard_check<T: Real>(seed: u64) -> Result<Vec<MethodGradCheck>, TrainError> {
    run_check_with_depth::<T>(seed, 1)
}

/// Same as [`run_standard_check`] with configurable head depth.
pub fn run_check_with_depth<T: Real>(
    seed: u64,
    head_depth: usize,
) -> Result<Vec<MethodGradCheck>, TrainError> {
    let dims = ModelDims {
        input_dim: 2,
        hidden_dim: 4,
        feature_dim: 4,
        n_primary_classes: 2,
        n_bias_classes: 2,
        head_depth,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::<T>::init(dims, &mut rng)?;
    let n = 8;
    let inputs = Matrix::from_fn(n, dims.input_dim, |_, _| T::c(rng.random::<f64>() * 3.0 - 1.5));
    let primary_labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let bias_labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let batch = Batch { inputs, primary_labels, bias_labels: Some(bias_labels) };
    Method::ALL
        .iter()
        .map(|&method| check_method(&model, &batch, method, 1.0, 0.01, 1e-5))
        .collect()
}
