//! The shared-extractor, two-head network and its hand-derived gradients.
//!
//! Layout: a feature extractor `f` (one ReLU hidden layer, linear output of
//! width K) feeds a primary classification head `g` and a bias head `h` in
//! parallel. Heads are one fully connected layer, or two with a ReLU in
//! between when `head_depth = 2`.
//!
//! Parameters flatten into one `Vec` (extractor, then primary head, then
//! bias head) so the optimiser and the finite-difference oracle can address
//! parameter groups by span.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

use super::linalg::Matrix;
use super::TrainError;

/// One fully connected layer; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self { weight: Matrix::zeros(out_dim, in_dim), bias: vec![T::zero(); out_dim] }
    }

    /// He-style uniform init scaled by fan-in; biases start at zero.
    fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let weight = Matrix::from_fn(out_dim, in_dim, |_, _| {
            T::c((rng.random::<f64>() * 2.0 - 1.0) * bound)
        });
        Self { weight, bias: vec![T::zero(); out_dim] }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    /// `x (n x in) -> x W^T + b (n x out)`.
    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = x.matmul_bt(&self.weight);
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        out
    }

    fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }

    fn push_params(&self, out: &mut Vec<T>) {
        out.extend_from_slice(self.weight.data());
        out.extend_from_slice(&self.bias);
    }

    fn load_params(&mut self, src: &mut &[T]) {
        let nw = self.weight.rows() * self.weight.cols();
        let nb = self.bias.len();
        self.weight.data_mut().copy_from_slice(&src[..nw]);
        self.bias.copy_from_slice(&src[nw..nw + nb]);
        *src = &src[nw + nb..];
    }
}

fn relu<T: Real>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for v in out.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    out
}

/// Zeroes gradient entries where the pre-activation was not positive.
fn relu_backward<T: Real>(grad: &mut Matrix<T>, pre: &Matrix<T>) {
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
        if p <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Feature extractor `f : R^input -> R^K` with one ReLU hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor<T> {
    pub hidden: Linear<T>,
    pub output: Linear<T>,
}

/// Classification head of one or two fully connected layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head<T> {
    pub layers: Vec<Linear<T>>,
}

impl<T: Real> Head<T> {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Network shape description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Feature embedding width K.
    pub feature_dim: usize,
    pub n_primary_classes: usize,
    pub n_bias_classes: usize,
    /// 1 or 2 fully connected layers per head.
    pub head_depth: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("feature_dim", self.feature_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TrainError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.n_primary_classes < 2 || self.n_bias_classes < 2 {
            return Err(TrainError::InvalidConfig("class counts must be >= 2".into()));
        }
        if !(self.head_depth == 1 || self.head_depth == 2) {
            return Err(TrainError::InvalidConfig(format!(
                "head_depth must be 1 or 2, got {}",
                self.head_depth
            )));
        }
        Ok(())
    }
}

/// Extractor plus primary and bias heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model<T> {
    pub dims: ModelDims,
    pub extractor: FeatureExtractor<T>,
    pub primary_head: Head<T>,
    pub bias_head: Head<T>,
}

/// Forward cache of one head.
#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    /// Pre-activation of the intermediate layer (depth-2 heads only).
    pub mid_pre: Option<Matrix<T>>,
    pub mid: Option<Matrix<T>>,
    pub logits: Matrix<T>,
}

/// Features, primary logits and bias logits of one example.
pub type SingleForward<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Forward cache of the whole network for one batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub hidden_pre: Matrix<T>,
    pub hidden: Matrix<T>,
    pub features: Matrix<T>,
    pub primary: HeadTrace<T>,
    pub bias: HeadTrace<T>,
}

/// Upstream logit gradients to route through the network. The bias head
/// appears twice on purpose: `bias_head` updates the head's own
/// parameters, while `bias_feature` flows through the (frozen) head into
/// the extractor — the two paths carry different losses in every
/// unlearning method.
#[derive(Debug, Clone, Default)]
pub struct LogitGradients<T> {
    pub primary: Option<Matrix<T>>,
    pub bias_head: Option<Matrix<T>>,
    pub bias_feature: Option<Matrix<T>>,
}

impl<T: Real> Model<T> {
    /// Deterministic seeded initialisation: He-uniform weights drawn in a
    /// fixed order, zero biases.
    pub fn init<R: Rng>(dims: ModelDims, rng: &mut R) -> Result<Self, TrainError> {
        dims.validate()?;
        let extractor = FeatureExtractor {
            hidden: Linear::init(dims.hidden_dim, dims.input_dim, rng),
            output: Linear::init(dims.feature_dim, dims.hidden_dim, rng),
        };
        let primary_head = init_head(dims, dims.n_primary_classes, &mut *rng);
        let bias_head = init_head(dims, dims.n_bias_classes, &mut *rng);
        Ok(Self { dims, extractor, primary_head, bias_head })
    }

    fn head_forward(head: &Head<T>, features: &Matrix<T>) -> HeadTrace<T> {
        match head.layers.as_slice() {
            [only] => HeadTrace { mid_pre: None, mid: None, logits: only.forward(features) },
            [first, second] => {
                let mid_pre = first.forward(features);
                let mid = relu(&mid_pre);
                let logits = second.forward(&mid);
                HeadTrace { mid_pre: Some(mid_pre), mid: Some(mid), logits }
            }
            _ => unreachable!("heads have one or two layers"),
        }
    }

    /// Batched forward pass; `x` is `n x input_dim`.
    pub fn forward_batch(&self, x: &Matrix<T>) -> Result<ForwardTrace<T>, TrainError> {
        if x.cols() != self.dims.input_dim {
            return Err(TrainError::ShapeMismatch {
                expected: self.dims.input_dim,
                actual: x.cols(),
            });
        }
        let hidden_pre = self.extractor.hidden.forward(x);
        let hidden = relu(&hidden_pre);
        let features = self.extractor.output.forward(&hidden);
        let primary = Self::head_forward(&self.primary_head, &features);
        let bias = Self::head_forward(&self.bias_head, &features);
        Ok(ForwardTrace { hidden_pre, hidden, features, primary, bias })
    }

    /// Single-example forward: `(features, primary_logits, bias_logits)`.
    pub fn forward(&self, x: &[T]) -> Result<SingleForward<T>, TrainError> {
        let input = Matrix::from_rows(vec![x.to_vec()]);
        let trace = self.forward_batch(&input)?;
        Ok((
            trace.features.row(0).to_vec(),
            trace.primary.logits.row(0).to_vec(),
            trace.bias.logits.row(0).to_vec(),
        ))
    }

    /// Backpropagates the routed logit gradients into a flat parameter
    /// gradient, laid out exactly like [`Model::flatten_params`].
    pub fn backward_batch(
        &self,
        x: &Matrix<T>,
        trace: &ForwardTrace<T>,
        upstream: &LogitGradients<T>,
    ) -> Result<Vec<T>, TrainError> {
        if x.rows() != trace.features.rows() {
            return Err(TrainError::ShapeMismatch {
                expected: trace.features.rows(),
                actual: x.rows(),
            });
        }
        let mut grads = vec![T::zero(); self.param_count()];
        let mut d_features = Matrix::zeros(trace.features.rows(), self.dims.feature_dim);

        if let Some(d_logits) = &upstream.primary {
            let (head_grads, d_input) =
                Self::head_backward(&self.primary_head, &trace.features, &trace.primary, d_logits);
            write_span(&mut grads, self.primary_span(), &head_grads);
            d_features.add_scaled(&d_input, T::one());
        }
        if let Some(d_logits) = &upstream.bias_head {
            let (head_grads, _) =
                Self::head_backward(&self.bias_head, &trace.features, &trace.bias, d_logits);
            write_span(&mut grads, self.bias_span(), &head_grads);
            // parameter stream only; the feature path is routed separately
        }
        if let Some(d_logits) = &upstream.bias_feature {
            let (_, d_input) =
                Self::head_backward(&self.bias_head, &trace.features, &trace.bias, d_logits);
            d_features.add_scaled(&d_input, T::one());
        }

        // extractor: features = W_out * hidden + b_out; hidden = relu(W_h x + b_h)
        let d_w_out = d_features.matmul_tn(&trace.hidden);
        let d_b_out = d_features.column_sums();
        let mut d_hidden = d_features.matmul(&self.extractor.output.weight);
        relu_backward(&mut d_hidden, &trace.hidden_pre);
        let d_w_hidden = d_hidden.matmul_tn(x);
        let d_b_hidden = d_hidden.column_sums();

        let mut flat = Vec::with_capacity(self.extractor_param_count());
        flat.extend_from_slice(d_w_hidden.data());
        flat.extend_from_slice(&d_b_hidden);
        flat.extend_from_slice(d_w_out.data());
        flat.extend_from_slice(&d_b_out);
        write_span(&mut grads, self.extractor_span(), &flat);
        Ok(grads)
    }

    /// Head backward: returns `(flat head parameter grads, d_features)`.
    fn head_backward(
        head: &Head<T>,
        features: &Matrix<T>,
        trace: &HeadTrace<T>,
        d_logits: &Matrix<T>,
    ) -> (Vec<T>, Matrix<T>) {
        match head.layers.as_slice() {
            [only] => {
                let d_w = d_logits.matmul_tn(features);
                let d_b = d_logits.column_sums();
                let d_input = d_logits.matmul(&only.weight);
                let mut flat = Vec::with_capacity(head_param_count(head));
                flat.extend_from_slice(d_w.data());
                flat.extend_from_slice(&d_b);
                (flat, d_input)
            }
            [first, second] => {
                let mid = trace.mid.as_ref().expect("depth-2 trace has mid");
                let mid_pre = trace.mid_pre.as_ref().expect("depth-2 trace has mid_pre");
                let d_w2 = d_logits.matmul_tn(mid);
                let d_b2 = d_logits.column_sums();
                let mut d_mid = d_logits.matmul(&second.weight);
                relu_backward(&mut d_mid, mid_pre);
                let d_w1 = d_mid.matmul_tn(features);
                let d_b1 = d_mid.column_sums();
                let d_input = d_mid.matmul(&first.weight);
                let mut flat = Vec::with_capacity(head_param_count(head));
                flat.extend_from_slice(d_w1.data());
                flat.extend_from_slice(&d_b1);
                flat.extend_from_slice(d_w2.data());
                flat.extend_from_slice(&d_b2);
                (flat, d_input)
            }
            _ => unreachable!("heads have one or two layers"),
        }
    }

    fn extractor_param_count(&self) -> usize {
        self.extractor.hidden.param_count() + self.extractor.output.param_count()
    }

    pub fn param_count(&self) -> usize {
        self.extractor_param_count()
            + head_param_count(&self.primary_head)
            + head_param_count(&self.bias_head)
    }

    /// Span of the extractor (`f`) parameters in the flat layout.
    pub fn extractor_span(&self) -> std::ops::Range<usize> {
        0..self.extractor_param_count()
    }

    /// Span of the primary head (`g`) parameters.
    pub fn primary_span(&self) -> std::ops::Range<usize> {
        let start = self.extractor_param_count();
        start..start + head_param_count(&self.primary_head)
    }

    /// Span of the bias head (`h`) parameters.
    pub fn bias_span(&self) -> std::ops::Range<usize> {
        let start = self.extractor_param_count() + head_param_count(&self.primary_head);
        start..start + head_param_count(&self.bias_head)
    }

    /// All parameters in the fixed flat order: extractor, primary head,
    /// bias head; each layer contributes weights (row-major) then biases.
    pub fn flatten_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        self.extractor.hidden.push_params(&mut out);
        self.extractor.output.push_params(&mut out);
        for layer in &self.primary_head.layers {
            layer.push_params(&mut out);
        }
        for layer in &self.bias_head.layers {
            layer.push_params(&mut out);
        }
        out
    }

    /// Overwrites all parameters from a flat slice (inverse of
    /// [`Model::flatten_params`]).
    pub fn load_params(&mut self, params: &[T]) -> Result<(), TrainError> {
        if params.len() != self.param_count() {
            return Err(TrainError::ShapeMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut src = params;
        self.extractor.hidden.load_params(&mut src);
        self.extractor.output.load_params(&mut src);
        for layer in &mut self.primary_head.layers {
            layer.load_params(&mut src);
        }
        for layer in &mut self.bias_head.layers {
            layer.load_params(&mut src);
        }
        debug_assert!(src.is_empty());
        Ok(())
    }
}

fn init_head<T: Real, R: Rng>(dims: ModelDims, classes: usize, rng: &mut R) -> Head<T> {
    let layers = if dims.head_depth == 1 {
        vec![Linear::init(classes, dims.feature_dim, rng)]
    } else {
        vec![
            Linear::init(dims.feature_dim, dims.feature_dim, rng),
            Linear::init(classes, dims.feature_dim, rng),
        ]
    };
    Head { layers }
}

fn head_param_count<T: Real>(head: &Head<T>) -> usize {
    head.layers.iter().map(Linear::param_count).sum()
}

fn write_span<T: Copy>(grads: &mut [T], span: std::ops::Range<usize>, values: &[T]) {
    debug_assert_eq!(span.len(), values.len());
    grads[span].copy_from_slice(values);
}
